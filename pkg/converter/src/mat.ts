/**
 * Minimal reader for MATLAB Level 5 MAT-files.
 *
 * Covers the subset the recording layout needs: little-endian files,
 * numeric matrices (any integer/float storage widened to float64),
 * character arrays, scalar structs, cell arrays, and zlib-compressed
 * top-level elements. Anything else is surfaced as an opaque value so
 * unknown fields never break a read.
 */
import * as zlib from "node:zlib";

export class MatFormatError extends Error {}

// mi* storage type codes from the file format
const MI_INT8 = 1;
const MI_UINT8 = 2;
const MI_INT16 = 3;
const MI_UINT16 = 4;
const MI_INT32 = 5;
const MI_UINT32 = 6;
const MI_SINGLE = 7;
const MI_DOUBLE = 9;
const MI_INT64 = 12;
const MI_UINT64 = 13;
const MI_MATRIX = 14;
const MI_COMPRESSED = 15;
const MI_UTF8 = 16;
const MI_UTF16 = 17;

// mx* array class codes
const MX_CELL = 1;
const MX_STRUCT = 2;
const MX_CHAR = 4;
const MX_DOUBLE = 6;
const MX_SINGLE = 7;
const MX_INT8 = 8;
const MX_UINT8 = 9;
const MX_INT16 = 10;
const MX_UINT16 = 11;
const MX_INT32 = 12;
const MX_UINT32 = 13;
const MX_INT64 = 14;
const MX_UINT64 = 15;

const NUMERIC_CLASS_NAMES: Record<number, string> = {
  [MX_DOUBLE]: "float64",
  [MX_SINGLE]: "float32",
  [MX_INT8]: "int8",
  [MX_UINT8]: "uint8",
  [MX_INT16]: "int16",
  [MX_UINT16]: "uint16",
  [MX_INT32]: "int32",
  [MX_UINT32]: "uint32",
  [MX_INT64]: "int64",
  [MX_UINT64]: "uint64",
};

export type MatValue =
  | { kind: "numeric"; dims: number[]; data: Float64Array; precision: string }
  | { kind: "char"; dims: number[]; text: string }
  | { kind: "struct"; dims: number[]; fields: Map<string, MatValue> }
  | { kind: "cell"; dims: number[]; items: MatValue[] }
  | { kind: "opaque"; dims: number[]; matClass: number };

interface Element {
  type: number;
  data: Buffer;
  next: number;
}

function readElement(buf: Buffer, offset: number): Element {
  if (offset + 8 > buf.length) {
    throw new MatFormatError(`truncated element tag at byte ${offset}`);
  }
  const word = buf.readUInt32LE(offset);
  const smallBytes = word >>> 16;
  if (smallBytes !== 0) {
    // small data element: type and size packed into one word, data in the next 4 bytes
    const type = word & 0xffff;
    if (smallBytes > 4) {
      throw new MatFormatError(`small element at byte ${offset} claims ${smallBytes} bytes`);
    }
    return { type, data: buf.subarray(offset + 4, offset + 4 + smallBytes), next: offset + 8 };
  }
  const nbytes = buf.readUInt32LE(offset + 4);
  const start = offset + 8;
  if (start + nbytes > buf.length) {
    throw new MatFormatError(`element at byte ${offset} overruns the file`);
  }
  const padded = nbytes % 8 === 0 ? nbytes : nbytes + (8 - (nbytes % 8));
  return { type: word, data: buf.subarray(start, start + nbytes), next: start + padded };
}

function numericToFloat64(type: number, data: Buffer): Float64Array {
  const widths: Record<number, number> = {
    [MI_INT8]: 1, [MI_UINT8]: 1, [MI_INT16]: 2, [MI_UINT16]: 2,
    [MI_INT32]: 4, [MI_UINT32]: 4, [MI_SINGLE]: 4, [MI_DOUBLE]: 8,
    [MI_INT64]: 8, [MI_UINT64]: 8,
  };
  const width = widths[type];
  if (width === undefined) {
    throw new MatFormatError(`unsupported numeric storage type ${type}`);
  }
  const n = Math.floor(data.length / width);
  const out = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    const o = i * width;
    switch (type) {
      case MI_INT8: out[i] = data.readInt8(o); break;
      case MI_UINT8: out[i] = data.readUInt8(o); break;
      case MI_INT16: out[i] = data.readInt16LE(o); break;
      case MI_UINT16: out[i] = data.readUInt16LE(o); break;
      case MI_INT32: out[i] = data.readInt32LE(o); break;
      case MI_UINT32: out[i] = data.readUInt32LE(o); break;
      case MI_SINGLE: out[i] = data.readFloatLE(o); break;
      case MI_DOUBLE: out[i] = data.readDoubleLE(o); break;
      case MI_INT64: out[i] = Number(data.readBigInt64LE(o)); break;
      case MI_UINT64: out[i] = Number(data.readBigUInt64LE(o)); break;
    }
  }
  return out;
}

function decodeChars(type: number, data: Buffer): string {
  if (type === MI_UINT16 || type === MI_UTF16) {
    let s = "";
    for (let o = 0; o + 2 <= data.length; o += 2) {
      s += String.fromCharCode(data.readUInt16LE(o));
    }
    return s;
  }
  if (type === MI_UINT8 || type === MI_INT8 || type === MI_UTF8) {
    return data.toString("utf8");
  }
  throw new MatFormatError(`unsupported character storage type ${type}`);
}

function parseMatrix(data: Buffer): { name: string; value: MatValue } {
  let off = 0;

  const flagsEl = readElement(data, off);
  if (flagsEl.type !== MI_UINT32 || flagsEl.data.length < 8) {
    throw new MatFormatError("matrix is missing its array-flags block");
  }
  const flagsWord = flagsEl.data.readUInt32LE(0);
  const matClass = flagsWord & 0xff;
  const complex = (flagsWord & 0x0800) !== 0;
  off = flagsEl.next;

  const dimsEl = readElement(data, off);
  if (dimsEl.type !== MI_INT32) {
    throw new MatFormatError("matrix is missing its dimensions block");
  }
  const dims: number[] = [];
  for (let o = 0; o + 4 <= dimsEl.data.length; o += 4) {
    dims.push(dimsEl.data.readInt32LE(o));
  }
  off = dimsEl.next;

  const nameEl = readElement(data, off);
  if (nameEl.type !== MI_INT8) {
    throw new MatFormatError("matrix is missing its name block");
  }
  const name = nameEl.data.toString("latin1");
  off = nameEl.next;

  const numel = dims.reduce((a, b) => a * b, 1);

  if (matClass in NUMERIC_CLASS_NAMES && !complex) {
    const real = readElement(data, off);
    const values = numericToFloat64(real.type, real.data);
    if (values.length < numel) {
      throw new MatFormatError(
        `numeric matrix "${name}" holds ${values.length} values for ${numel} elements`);
    }
    const precision = NUMERIC_CLASS_NAMES[matClass] as string;
    return { name, value: { kind: "numeric", dims, data: values.subarray(0, numel), precision } };
  }

  if (matClass === MX_CHAR) {
    const chars = readElement(data, off);
    return { name, value: { kind: "char", dims, text: decodeChars(chars.type, chars.data) } };
  }

  if (matClass === MX_STRUCT) {
    const lenEl = readElement(data, off);
    if (lenEl.type !== MI_INT32 || lenEl.data.length < 4) {
      throw new MatFormatError(`struct "${name}" is missing its field-name length`);
    }
    const nameLen = lenEl.data.readInt32LE(0);
    off = lenEl.next;
    const namesEl = readElement(data, off);
    if (namesEl.type !== MI_INT8 || nameLen <= 0) {
      throw new MatFormatError(`struct "${name}" is missing its field names`);
    }
    off = namesEl.next;
    const fieldNames: string[] = [];
    for (let o = 0; o + nameLen <= namesEl.data.length; o += nameLen) {
      const raw = namesEl.data.subarray(o, o + nameLen);
      const nul = raw.indexOf(0);
      fieldNames.push(raw.subarray(0, nul === -1 ? raw.length : nul).toString("latin1"));
    }
    if (numel !== 1) {
      // struct arrays are out of scope; skip their contents wholesale
      return { name, value: { kind: "opaque", dims, matClass } };
    }
    const fields = new Map<string, MatValue>();
    for (const fieldName of fieldNames) {
      const fieldEl = readElement(data, off);
      off = fieldEl.next;
      if (fieldEl.type !== MI_MATRIX) {
        throw new MatFormatError(`struct field "${fieldName}" is not a matrix element`);
      }
      if (fieldEl.data.length === 0) {
        fields.set(fieldName, { kind: "opaque", dims: [0, 0], matClass: 0 });
        continue;
      }
      fields.set(fieldName, parseMatrix(fieldEl.data).value);
    }
    return { name, value: { kind: "struct", dims, fields } };
  }

  if (matClass === MX_CELL) {
    const items: MatValue[] = [];
    for (let i = 0; i < numel; i++) {
      const cellEl = readElement(data, off);
      off = cellEl.next;
      if (cellEl.type !== MI_MATRIX) {
        throw new MatFormatError(`cell ${i} of "${name}" is not a matrix element`);
      }
      items.push(cellEl.data.length === 0
        ? { kind: "opaque", dims: [0, 0], matClass: 0 }
        : parseMatrix(cellEl.data).value);
    }
    return { name, value: { kind: "cell", dims, items } };
  }

  return { name, value: { kind: "opaque", dims, matClass } };
}

/** Parse a MAT-file buffer into a map of top-level variable name to value. */
export function matRead(buf: Buffer): Map<string, MatValue> {
  if (buf.length < 128) {
    throw new MatFormatError("file is shorter than a MAT header");
  }
  for (let i = 0; i < 4; i++) {
    if (buf[i] === 0) {
      throw new MatFormatError("not a Level 5 MAT-file (header text starts with a zero byte)");
    }
  }
  const endian = buf.toString("latin1", 126, 128);
  if (endian === "MI") {
    throw new MatFormatError("big-endian MAT-files are not supported");
  }
  if (endian !== "IM") {
    throw new MatFormatError("missing MAT endian marker");
  }

  const out = new Map<string, MatValue>();
  let off = 128;
  while (off + 8 <= buf.length) {
    const el = readElement(buf, off);
    off = Math.min(el.next, buf.length);
    let type = el.type;
    let data = el.data;
    if (type === MI_COMPRESSED) {
      let inflated: Buffer;
      try {
        inflated = zlib.inflateSync(data);
      } catch (e) {
        throw new MatFormatError(`corrupt compressed element: ${(e as Error).message}`);
      }
      const inner = readElement(inflated, 0);
      type = inner.type;
      data = inner.data;
    }
    if (type !== MI_MATRIX) {
      continue; // tolerate unknown top-level elements
    }
    if (data.length === 0) {
      continue;
    }
    const { name, value } = parseMatrix(data);
    if (name.length > 0) {
      out.set(name, value);
    }
  }
  return out;
}

/** Column-major accessor: element (row, col) of a 2-D numeric matrix. */
export function at(m: { dims: number[]; data: Float64Array }, row: number, col: number): number {
  const rows = m.dims[0] ?? 0;
  return m.data[col * rows + row] as number;
}
