#!/usr/bin/env node
/**
 * convert <source.mat> <outdir> [--epoch-seconds 3.0]
 *
 * Converts one subject's MATLAB-format recording into an EPB1 epoch file
 * plus a JSON manifest (written next to the output and echoed to stdout).
 * Exit codes: 0 converted, 1 conversion failure, 2 usage error.
 */
import { convert, MissingTrialBlock, RateMismatch, UnreadableSource } from "./convert";

const USAGE = "usage: convert <source.mat> <outdir> [--epoch-seconds SECONDS]";

function fail(code: number, message: string): never {
  process.stderr.write(message + "\n");
  process.exit(code);
}

export function main(argv: string[]): void {
  const args = argv.slice();
  if (args[0] !== "convert") {
    fail(2, USAGE);
  }
  args.shift();

  let epochSeconds = 3.0;
  const positional: string[] = [];
  while (args.length > 0) {
    const arg = args.shift() as string;
    if (arg === "--epoch-seconds") {
      const value = args.shift();
      if (value === undefined) {
        fail(2, "--epoch-seconds needs a value\n" + USAGE);
      }
      epochSeconds = Number(value);
      if (!(Number.isFinite(epochSeconds) && epochSeconds > 0)) {
        fail(2, `--epoch-seconds must be a positive number, got ${value}`);
      }
    } else if (arg.startsWith("--")) {
      fail(2, `unknown flag ${arg}\n` + USAGE);
    } else {
      positional.push(arg);
    }
  }
  if (positional.length !== 2) {
    fail(2, USAGE);
  }
  const [source, outdir] = positional as [string, string];

  try {
    const manifest = convert(source, outdir, epochSeconds);
    process.stdout.write(JSON.stringify(manifest, null, 2) + "\n");
  } catch (e) {
    if (e instanceof UnreadableSource || e instanceof MissingTrialBlock
        || e instanceof RateMismatch || e instanceof RangeError) {
      fail(1, `${e.constructor.name}: ${e.message}`);
    }
    throw e;
  }
}

if (require.main === module) {
  main(process.argv.slice(2));
}
