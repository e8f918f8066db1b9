/**
 * One-shot conversion of a MATLAB-format motor-imagery recording into an
 * EPB1 epoch file.
 *
 * The source file holds one subject: a struct (canonically named "eeg")
 * with continuous left- and right-imagery recordings, a cue-onset marker
 * vector shared by both, a continuous resting recording, and the sampling
 * rate. Imagery epochs are cut from each cue onset; rest epochs are tiled
 * from the resting recording in non-overlapping windows, capped to the
 * smaller per-class imagery count so the three classes stay balanced.
 * The converter is a pure format bridge: no filtering, no channel
 * selection, all 64 montage channels pass through bit-for-bit.
 */
import * as crypto from "node:crypto";
import * as fs from "node:fs";
import * as path from "node:path";

import { Epb1File, writeEpb1 } from "./epb1";
import { MatFormatError, MatValue, matRead } from "./mat";
import { MONTAGE_64, MONTAGE_CHANNELS } from "./montage";

/** The file could not be read or is not a recording in the expected container. */
export class UnreadableSource extends Error {}

/** A required recording block (imagery, cues, or rest) is absent or malformed. */
export class MissingTrialBlock extends Error {}

/** The recording's sampling rate is not the rate the pipeline expects. */
export class RateMismatch extends Error {}

export const EXPECTED_RATE_HZ = 512;

const STRUCT_NAME = "eeg";
const LEFT_FIELD = "imagery_left";
const RIGHT_FIELD = "imagery_right";
const EVENT_FIELD = "imagery_event";
const REST_FIELD = "rest";
const RATE_FIELD = "srate";
const SUBJECT_FIELD = "subject";

export interface ClassCounts {
  left: number;
  right: number;
  rest: number;
}

export interface ConversionManifest {
  format: "EPB1";
  source_file: string;
  output_file: string;
  subject_id: number;
  sample_rate_hz: number;
  epoch_seconds: number;
  samples_per_epoch: number;
  source_channels: number;
  channels_emitted: number;
  epochs_emitted: ClassCounts;
  epochs_skipped: ClassCounts;
  /** narrowest floating class among the recording blocks read */
  source_precision: string;
  /** true when source samples were stored below 64-bit and widened (exactly) on read */
  widened_to_float64: boolean;
  /** hex SHA-256 of the emitted EPB1 file */
  sha256: string;
}

type Numeric = { kind: "numeric"; dims: number[]; data: Float64Array; precision: string };

function requireBlock(fields: Map<string, MatValue>, name: string): Numeric {
  const v = fields.get(name);
  if (v === undefined) {
    throw new MissingTrialBlock(`recording has no "${name}" block`);
  }
  if (v.kind !== "numeric" || v.data.length === 0) {
    throw new MissingTrialBlock(`"${name}" block is not a non-empty numeric matrix`);
  }
  return v;
}

function blockShape(block: Numeric, name: string): { rows: number; cols: number } {
  if (block.dims.length !== 2) {
    throw new MissingTrialBlock(`"${name}" block is not a 2-D matrix`);
  }
  const [rows, cols] = block.dims as [number, number];
  if (rows < MONTAGE_CHANNELS) {
    throw new MissingTrialBlock(
      `"${name}" block has ${rows} channels, need at least ${MONTAGE_CHANNELS}`);
  }
  return { rows, cols };
}

function findRecording(vars: Map<string, MatValue>): Map<string, MatValue> {
  const named = vars.get(STRUCT_NAME);
  if (named !== undefined && named.kind === "struct") {
    return named.fields;
  }
  const structs = [...vars.values()].filter((v) => v.kind === "struct");
  if (structs.length === 1) {
    return (structs[0] as { fields: Map<string, MatValue> }).fields;
  }
  throw new UnreadableSource(
    `no "${STRUCT_NAME}" struct (or single unambiguous struct) in the file`);
}

function subjectIdFrom(fields: Map<string, MatValue>, sourcePath: string): number {
  const field = fields.get(SUBJECT_FIELD);
  let text = "";
  if (field !== undefined) {
    if (field.kind === "char") {
      text = field.text;
    } else if (field.kind === "numeric" && field.data.length === 1) {
      const v = field.data[0] as number;
      if (Number.isInteger(v) && v >= 0 && v <= 0xffff) {
        return v;
      }
    }
  }
  if (text === "") {
    text = path.basename(sourcePath);
  }
  const digits = text.match(/\d+/);
  if (digits !== null) {
    const v = parseInt(digits[0], 10);
    if (v <= 0xffff) {
      return v;
    }
  }
  return 0;
}

/**
 * Copy one epoch window out of a column-major (channels x samples) block.
 * Pure element copy, so emitted bytes equal source bytes.
 */
function sliceEpoch(
  block: Numeric, rows: number, start: number, samples: number, out: Float64Array, outOffset: number,
): void {
  for (let ch = 0; ch < MONTAGE_CHANNELS; ch++) {
    const dst = outOffset + ch * samples;
    for (let t = 0; t < samples; t++) {
      out[dst + t] = block.data[(start + t) * rows + ch] as number;
    }
  }
}

export function convert(
  sourcePath: string, outputDir: string, epochSeconds = 3.0,
): ConversionManifest {
  let raw: Buffer;
  try {
    raw = fs.readFileSync(sourcePath);
  } catch (e) {
    throw new UnreadableSource(`cannot read ${sourcePath}: ${(e as Error).message}`);
  }
  let vars: Map<string, MatValue>;
  try {
    vars = matRead(raw);
  } catch (e) {
    if (e instanceof MatFormatError) {
      throw new UnreadableSource(`${sourcePath}: ${e.message}`);
    }
    throw e;
  }
  const fields = findRecording(vars);

  const rateField = fields.get(RATE_FIELD);
  if (rateField === undefined || rateField.kind !== "numeric" || rateField.data.length !== 1) {
    throw new UnreadableSource(`recording has no scalar "${RATE_FIELD}" field`);
  }
  const rate = rateField.data[0] as number;
  if (rate !== EXPECTED_RATE_HZ) {
    throw new RateMismatch(`recording is sampled at ${rate} Hz, expected ${EXPECTED_RATE_HZ} Hz`);
  }

  if (!(Number.isFinite(epochSeconds) && epochSeconds > 0)) {
    throw new RangeError(`epoch_seconds must be a positive number, got ${epochSeconds}`);
  }
  const exact = epochSeconds * rate;
  const samples = Math.round(exact);
  if (samples < 1 || Math.abs(exact - samples) > 1e-9) {
    // epochs are never padded or truncated to fit
    throw new RangeError(
      `epoch_seconds=${epochSeconds} is not a whole number of samples at ${rate} Hz`);
  }

  const left = requireBlock(fields, LEFT_FIELD);
  const right = requireBlock(fields, RIGHT_FIELD);
  const events = requireBlock(fields, EVENT_FIELD);
  const rest = requireBlock(fields, REST_FIELD);

  const leftShape = blockShape(left, LEFT_FIELD);
  const rightShape = blockShape(right, RIGHT_FIELD);
  const restShape = blockShape(rest, REST_FIELD);

  const onsets: number[] = [];
  for (let i = 0; i < events.data.length; i++) {
    if (events.data[i] !== 0) {
      onsets.push(i);
    }
  }
  if (onsets.length === 0) {
    throw new MissingTrialBlock(`"${EVENT_FIELD}" marks no cue onsets`);
  }

  // cue windows that would run past the end of a recording are skipped, never padded
  const leftStarts = onsets.filter((o) => o + samples <= leftShape.cols);
  const rightStarts = onsets.filter((o) => o + samples <= rightShape.cols);
  const restAvailable = Math.floor(restShape.cols / samples);
  const restCap = Math.min(leftStarts.length, rightStarts.length);
  const restCount = Math.min(restCap, restAvailable);

  const emitted: ClassCounts = {
    left: leftStarts.length,
    right: rightStarts.length,
    rest: restCount,
  };
  const skipped: ClassCounts = {
    left: onsets.length - leftStarts.length,
    right: onsets.length - rightStarts.length,
    rest: restAvailable - restCount,
  };

  const nEpochs = emitted.left + emitted.right + emitted.rest;
  const labels = new Uint8Array(nEpochs);
  const payload = new Float64Array(nEpochs * MONTAGE_CHANNELS * samples);
  const epochSize = MONTAGE_CHANNELS * samples;

  let epoch = 0;
  for (const start of leftStarts) {
    labels[epoch] = 0;
    sliceEpoch(left, leftShape.rows, start, samples, payload, epoch * epochSize);
    epoch += 1;
  }
  for (const start of rightStarts) {
    labels[epoch] = 1;
    sliceEpoch(right, rightShape.rows, start, samples, payload, epoch * epochSize);
    epoch += 1;
  }
  for (let w = 0; w < restCount; w++) {
    labels[epoch] = 2;
    sliceEpoch(rest, restShape.rows, w * samples, samples, payload, epoch * epochSize);
    epoch += 1;
  }

  const subjectId = subjectIdFrom(fields, sourcePath);
  const file: Epb1File = {
    subjectId,
    sampleRateHz: rate,
    channelNames: [...MONTAGE_64],
    labels,
    payload,
    nEpochs,
    nChannels: MONTAGE_CHANNELS,
    nSamples: samples,
  };
  const encoded = writeEpb1(file);

  const stem = `s${String(subjectId).padStart(2, "0")}`;
  fs.mkdirSync(outputDir, { recursive: true });
  const outputFile = `${stem}.epb1`;
  fs.writeFileSync(path.join(outputDir, outputFile), encoded);

  const narrowed = [left, right, rest].map((b) => b.precision).filter((p) => p !== "float64");
  const sourcePrecision = narrowed.length === 0 ? "float64" : (narrowed[0] as string);

  const manifest: ConversionManifest = {
    format: "EPB1",
    source_file: path.basename(sourcePath),
    output_file: outputFile,
    subject_id: subjectId,
    sample_rate_hz: rate,
    epoch_seconds: epochSeconds,
    samples_per_epoch: samples,
    source_channels: leftShape.rows,
    channels_emitted: MONTAGE_CHANNELS,
    epochs_emitted: emitted,
    epochs_skipped: skipped,
    source_precision: sourcePrecision,
    widened_to_float64: narrowed.length > 0,
    sha256: crypto.createHash("sha256").update(encoded).digest("hex"),
  };
  fs.writeFileSync(
    path.join(outputDir, `${stem}.manifest.json`),
    JSON.stringify(manifest, null, 2) + "\n");
  return manifest;
}
