import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ConversionManifest } from "../src/convert";
import { buildFixture } from "./fixtures";

const ROOT = path.resolve(__dirname, "..");
const CLI = path.join(ROOT, "dist", "cli.js");

const tmpRoots: string[] = [];
function tmpDir(): string {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "epbconv-"));
  tmpRoots.push(dir);
  return dir;
}
afterAll(() => {
  for (const dir of tmpRoots) {
    fs.rmSync(dir, { recursive: true, force: true });
  }
});

function cli(args: string[]) {
  return spawnSync("node", [CLI, ...args], { encoding: "utf8", timeout: 60000 });
}

beforeAll(() => {
  if (!fs.existsSync(CLI)) {
    const build = spawnSync("npx", ["tsc", "-p", "."], { cwd: ROOT, encoding: "utf8" });
    if (build.status !== 0) {
      throw new Error(`tsc failed:\n${build.stdout}\n${build.stderr}`);
    }
  }
});

describe("convert CLI", () => {
  it("converts a recording and prints the manifest", () => {
    const source = path.join(tmpDir(), "s02.mat");
    fs.writeFileSync(source, buildFixture({ subject: "s02" }).buffer);
    const out = tmpDir();

    const proc = cli(["convert", source, out]);
    expect(proc.status, proc.stderr).toBe(0);
    const manifest = JSON.parse(proc.stdout) as ConversionManifest;
    expect(manifest.output_file).toBe("s02.epb1");
    expect(manifest.epochs_emitted).toEqual({ left: 2, right: 2, rest: 2 });
    expect(fs.existsSync(path.join(out, "s02.epb1"))).toBe(true);

    const onDisk = JSON.parse(fs.readFileSync(path.join(out, "s02.manifest.json"), "utf8"));
    expect(onDisk).toEqual(manifest);
  });

  it("applies --epoch-seconds", () => {
    const source = path.join(tmpDir(), "s01.mat");
    fs.writeFileSync(source, buildFixture().buffer);
    const proc = cli(["convert", source, tmpDir(), "--epoch-seconds", "1.5"]);
    expect(proc.status).toBe(0);
    expect((JSON.parse(proc.stdout) as ConversionManifest).samples_per_epoch).toBe(768);
  });

  it("exits 2 on usage errors", () => {
    expect(cli([]).status).toBe(2);
    expect(cli(["frobnicate", "a", "b"]).status).toBe(2);
    expect(cli(["convert", "only-one-arg"]).status).toBe(2);
    expect(cli(["convert", "a", "b", "--epoch-seconds"]).status).toBe(2);
    expect(cli(["convert", "a", "b", "--epoch-seconds", "zero"]).status).toBe(2);
    expect(cli(["convert", "a", "b", "--bogus"]).status).toBe(2);
  });

  it("exits 1 with the error class on conversion failures", () => {
    const source = path.join(tmpDir(), "s01.mat");
    fs.writeFileSync(source, buildFixture({ rate: 511 }).buffer);
    const bad = cli(["convert", source, tmpDir()]);
    expect(bad.status).toBe(1);
    expect(bad.stderr).toContain("RateMismatch");

    const missing = cli(["convert", path.join(tmpDir(), "nope.mat"), tmpDir()]);
    expect(missing.status).toBe(1);
    expect(missing.stderr).toContain("UnreadableSource");
  });
});
