/**
 * Construct MATLAB Level 5 MAT-file fixtures that mimic one subject's
 * recording layout: an "eeg" struct holding continuous left/right imagery
 * blocks, a shared cue-onset vector, a resting recording, the sampling
 * rate, and a subject tag. The builder returns the raw arrays so tests can
 * derive expected epoch contents independently of the converter.
 */
import * as zlib from "node:zlib";

const MI_INT8 = 1;
const MI_UINT8 = 2;
const MI_UINT16 = 4;
const MI_INT32 = 5;
const MI_UINT32 = 6;
const MI_SINGLE = 7;
const MI_DOUBLE = 9;
const MI_MATRIX = 14;
const MI_COMPRESSED = 15;

const MX_STRUCT = 2;
const MX_CHAR = 4;
const MX_DOUBLE = 6;
const MX_SINGLE = 7;

function pad8(buf: Buffer): Buffer {
  const rem = buf.length % 8;
  return rem === 0 ? buf : Buffer.concat([buf, Buffer.alloc(8 - rem)]);
}

export function element(type: number, data: Buffer): Buffer {
  const tag = Buffer.alloc(8);
  tag.writeUInt32LE(type, 0);
  tag.writeUInt32LE(data.length, 4);
  return Buffer.concat([tag, pad8(data)]);
}

/** Small data element: type and byte count packed into the tag word. */
export function smallElement(type: number, data: Buffer): Buffer {
  if (data.length > 4) {
    throw new RangeError("small elements hold at most 4 bytes");
  }
  const out = Buffer.alloc(8);
  out.writeUInt32LE(type | (data.length << 16), 0);
  data.copy(out, 4);
  return out;
}

function arrayFlags(matClass: number): Buffer {
  const data = Buffer.alloc(8);
  data.writeUInt32LE(matClass, 0);
  return element(MI_UINT32, data);
}

function dims2(rows: number, cols: number): Buffer {
  const data = Buffer.alloc(8);
  data.writeInt32LE(rows, 0);
  data.writeInt32LE(cols, 4);
  return element(MI_INT32, data);
}

function nameElement(name: string): Buffer {
  return element(MI_INT8, Buffer.from(name, "latin1"));
}

export interface NumericOptions {
  /** store values as 32-bit floats under a single-class matrix */
  single?: boolean;
  /** store values in u8 storage under a double-class matrix (lossless for 0..255 ints) */
  storeU8?: boolean;
}

/** Column-major numeric matrix element. */
export function numericMatrix(
  name: string, rows: number, cols: number, values: Float64Array, opts: NumericOptions = {},
): Buffer {
  let dataEl: Buffer;
  let matClass = MX_DOUBLE;
  if (opts.single === true) {
    matClass = MX_SINGLE;
    const data = Buffer.alloc(4 * values.length);
    for (let i = 0; i < values.length; i++) {
      data.writeFloatLE(Math.fround(values[i] as number), 4 * i);
    }
    dataEl = element(MI_SINGLE, data);
  } else if (opts.storeU8 === true) {
    const data = Buffer.alloc(values.length);
    for (let i = 0; i < values.length; i++) {
      data.writeUInt8(values[i] as number, i);
    }
    dataEl = element(MI_UINT8, data);
  } else {
    const data = Buffer.alloc(8 * values.length);
    for (let i = 0; i < values.length; i++) {
      data.writeDoubleLE(values[i] as number, 8 * i);
    }
    dataEl = element(MI_DOUBLE, data);
  }
  const body = Buffer.concat([arrayFlags(matClass), dims2(rows, cols), nameElement(name), dataEl]);
  return element(MI_MATRIX, body);
}

/** Scalar double stored in 16-bit storage inside a small element. */
export function scalarSmall(name: string, value: number): Buffer {
  const data = Buffer.alloc(2);
  data.writeUInt16LE(value, 0);
  const body = Buffer.concat([
    arrayFlags(MX_DOUBLE), dims2(1, 1), nameElement(name), smallElement(MI_UINT16, data),
  ]);
  return element(MI_MATRIX, body);
}

export function charMatrix(name: string, text: string): Buffer {
  const data = Buffer.alloc(2 * text.length);
  for (let i = 0; i < text.length; i++) {
    data.writeUInt16LE(text.charCodeAt(i), 2 * i);
  }
  const body = Buffer.concat([
    arrayFlags(MX_CHAR), dims2(1, text.length), nameElement(name), element(MI_UINT16, data),
  ]);
  return element(MI_MATRIX, body);
}

/** 1x1 struct whose field values are complete (empty-named) matrix elements. */
export function structMatrix(name: string, fields: Array<[string, Buffer]>): Buffer {
  const nameLen = 32;
  const lenData = Buffer.alloc(4);
  lenData.writeInt32LE(nameLen, 0);
  const names = Buffer.alloc(nameLen * fields.length);
  fields.forEach(([fieldName], i) => {
    names.write(fieldName, i * nameLen, "latin1");
  });
  const body = Buffer.concat([
    arrayFlags(MX_STRUCT), dims2(1, 1), nameElement(name),
    smallElement(MI_INT32, lenData), element(MI_INT8, names),
    ...fields.map(([, el]) => el),
  ]);
  return element(MI_MATRIX, body);
}

export function matHeader(): Buffer {
  const header = Buffer.alloc(128);
  header.write("MATLAB 5.0 MAT-file, constructed test fixture", 0, "latin1");
  for (let i = header.indexOf(0); i < 116; i++) {
    header[i] = 0x20;
  }
  header.writeUInt16LE(0x0100, 124);
  header.write("IM", 126, "latin1");
  return header;
}

export function matFile(...elements: Buffer[]): Buffer {
  return Buffer.concat([matHeader(), ...elements]);
}

export function compressedElement(inner: Buffer): Buffer {
  return element(MI_COMPRESSED, zlib.deflateSync(inner));
}

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Column-major (rows x cols) matrix of arbitrary doubles. */
export function randomBlock(rows: number, cols: number, seed: number): Float64Array {
  const rng = mulberry32(seed);
  const out = new Float64Array(rows * cols);
  for (let i = 0; i < out.length; i++) {
    out[i] = (rng() * 2 - 1) * 43.7e-6 + rng() * 1e-8;
  }
  return out;
}

export interface FixtureSpec {
  trialsPerClass?: number;
  rate?: number;
  channels?: number;
  /** samples from trial start to the cue onset */
  cueOffset?: number;
  trialSamples?: number;
  /** full epoch windows the resting block can hold */
  restWindows?: number;
  /** extra samples past the last full rest window */
  restTail?: number;
  subject?: string | null;
  subjectNumeric?: number;
  seed?: number;
  single?: boolean;
  compressed?: boolean;
  /** field names to leave out of the struct */
  omit?: string[];
  /** explicit cue onsets, overriding the regular trial grid */
  onsets?: number[];
  epochSamples?: number;
}

export interface Fixture {
  buffer: Buffer;
  rows: number;
  imageryCols: number;
  restCols: number;
  onsets: number[];
  left: Float64Array;
  right: Float64Array;
  rest: Float64Array;
}

export function buildFixture(spec: FixtureSpec = {}): Fixture {
  const trials = spec.trialsPerClass ?? 2;
  const rate = spec.rate ?? 512;
  const rows = spec.channels ?? 64;
  const epochSamples = spec.epochSamples ?? 3 * 512;
  const cueOffset = spec.cueOffset ?? 1024;
  const trialSamples = spec.trialSamples ?? 3584;
  const restWindows = spec.restWindows ?? 5;
  const restTail = spec.restTail ?? 700;
  const seed = spec.seed ?? 1;
  const omit = new Set(spec.omit ?? []);

  const onsets = spec.onsets ?? Array.from({ length: trials }, (_, t) => t * trialSamples + cueOffset);
  const imageryCols = spec.onsets !== undefined
    ? trials * trialSamples
    : Math.max(trials * trialSamples, ...onsets.map((o) => o + epochSamples));
  const restCols = restWindows * epochSamples + restTail;

  const left = randomBlock(rows, imageryCols, seed);
  const right = randomBlock(rows, imageryCols, seed + 1000);
  const rest = randomBlock(rows, restCols, seed + 2000);
  const events = new Float64Array(imageryCols);
  for (const o of onsets) {
    if (o < imageryCols) {
      events[o] = 1;
    }
  }

  const numOpts: NumericOptions = spec.single === true ? { single: true } : {};
  const fields: Array<[string, Buffer]> = [];
  const put = (name: string, el: Buffer) => {
    if (!omit.has(name)) {
      fields.push([name, el]);
    }
  };
  put("imagery_left", numericMatrix("", rows, imageryCols, left, numOpts));
  put("imagery_right", numericMatrix("", rows, imageryCols, right, numOpts));
  put("imagery_event", numericMatrix("", 1, imageryCols, events, { storeU8: true }));
  put("rest", numericMatrix("", rows, restCols, rest, numOpts));
  put("srate", rate === Math.round(rate) && rate < 65536
    ? scalarSmall("", rate)
    : numericMatrix("", 1, 1, Float64Array.of(rate)));
  if (spec.subjectNumeric !== undefined) {
    put("subject", numericMatrix("", 1, 1, Float64Array.of(spec.subjectNumeric)));
  } else if (spec.subject !== null) {
    put("subject", charMatrix("", spec.subject ?? "s01"));
  }
  // an extra field the converter must ignore
  put("n_imagery_trials", numericMatrix("", 1, 1, Float64Array.of(trials)));

  const struct = structMatrix("eeg", fields);
  const body = spec.compressed === true ? compressedElement(struct) : struct;
  const fixed = spec.single === true
    ? { left: widen(left), right: widen(right), rest: widen(rest) }
    : { left, right, rest };
  return { buffer: matFile(body), rows, imageryCols, restCols, onsets, ...fixed };
}

function widen(values: Float64Array): Float64Array {
  const out = new Float64Array(values.length);
  for (let i = 0; i < values.length; i++) {
    out[i] = Math.fround(values[i] as number);
  }
  return out;
}

/**
 * Independently assemble the payload the converter should emit for the
 * first 64 channels: left epochs at each onset, right epochs at each
 * onset, then tiled rest windows.
 */
export function expectedPayload(
  fx: Fixture, epochSamples: number, restCount: number,
  leftStarts?: number[], rightStarts?: number[],
): Float64Array {
  const starts = {
    left: leftStarts ?? fx.onsets,
    right: rightStarts ?? fx.onsets,
    rest: Array.from({ length: restCount }, (_, w) => w * epochSamples),
  };
  const channels = 64;
  const epochSize = channels * epochSamples;
  const total = starts.left.length + starts.right.length + restCount;
  const out = new Float64Array(total * epochSize);
  let epoch = 0;
  const copyFrom = (block: Float64Array, start: number) => {
    for (let ch = 0; ch < channels; ch++) {
      for (let t = 0; t < epochSamples; t++) {
        out[epoch * epochSize + ch * epochSamples + t] = block[(start + t) * fx.rows + ch] as number;
      }
    }
    epoch += 1;
  };
  for (const s of starts.left) copyFrom(fx.left, s);
  for (const s of starts.right) copyFrom(fx.right, s);
  for (const s of starts.rest) copyFrom(fx.rest, s);
  return out;
}
