/**
 * Writer and reader for the EPB1 epoch container.
 *
 * Layout, little-endian throughout: "EPB1" magic, u16 version (1),
 * u16 subject id, u32 epoch count, u16 channel count, u32 samples per
 * channel, f64 sample rate, u16 name count followed by u16-length-prefixed
 * UTF-8 channel names, one u8 label per epoch (0 left, 1 right, 2 rest),
 * then the sample payload as f64 values ordered epoch-major then
 * channel-major.
 */

export const EPB1_MAGIC = "EPB1";
export const EPB1_VERSION = 1;

export interface Epb1File {
  subjectId: number;
  sampleRateHz: number;
  channelNames: string[];
  /** one code per epoch: 0 left, 1 right, 2 rest */
  labels: Uint8Array;
  /** epoch-major then channel-major, nEpochs * nChannels * nSamples values */
  payload: Float64Array;
  nEpochs: number;
  nChannels: number;
  nSamples: number;
}

export function writeEpb1(file: Epb1File): Buffer {
  const { nEpochs, nChannels, nSamples } = file;
  if (file.labels.length !== nEpochs) {
    throw new RangeError(`${file.labels.length} labels for ${nEpochs} epochs`);
  }
  if (file.payload.length !== nEpochs * nChannels * nSamples) {
    throw new RangeError("payload length does not match the declared shape");
  }
  if (file.channelNames.length !== nChannels) {
    throw new RangeError(`${file.channelNames.length} names for ${nChannels} channels`);
  }
  for (const label of file.labels) {
    if (label > 2) {
      throw new RangeError(`label code ${label} is outside {0, 1, 2}`);
    }
  }

  const nameBytes = file.channelNames.map((n) => Buffer.from(n, "utf8"));
  const namesSize = nameBytes.reduce((a, b) => a + 2 + b.length, 0);
  const total = 26 + 2 + namesSize + nEpochs + 8 * file.payload.length;
  const buf = Buffer.alloc(total);

  let off = 0;
  buf.write(EPB1_MAGIC, off, "latin1"); off += 4;
  off = buf.writeUInt16LE(EPB1_VERSION, off);
  off = buf.writeUInt16LE(file.subjectId, off);
  off = buf.writeUInt32LE(nEpochs, off);
  off = buf.writeUInt16LE(nChannels, off);
  off = buf.writeUInt32LE(nSamples, off);
  off = buf.writeDoubleLE(file.sampleRateHz, off);
  off = buf.writeUInt16LE(nameBytes.length, off);
  for (const nb of nameBytes) {
    off = buf.writeUInt16LE(nb.length, off);
    off += nb.copy(buf, off);
  }
  for (const label of file.labels) {
    off = buf.writeUInt8(label, off);
  }
  for (let i = 0; i < file.payload.length; i++) {
    off = buf.writeDoubleLE(file.payload[i] as number, off);
  }
  return buf;
}

/** Byte offset of the first payload value in an encoded file. */
export function payloadOffset(buf: Buffer): number {
  const nEpochs = buf.readUInt32LE(8);
  const nameCount = buf.readUInt16LE(26);
  let off = 28;
  for (let i = 0; i < nameCount; i++) {
    off += 2 + buf.readUInt16LE(off);
  }
  return off + nEpochs;
}

export function readEpb1(buf: Buffer): Epb1File {
  if (buf.length < 28 || buf.toString("latin1", 0, 4) !== EPB1_MAGIC) {
    throw new RangeError("not an EPB1 file");
  }
  if (buf.readUInt16LE(4) !== EPB1_VERSION) {
    throw new RangeError(`unsupported EPB1 version ${buf.readUInt16LE(4)}`);
  }
  const subjectId = buf.readUInt16LE(6);
  const nEpochs = buf.readUInt32LE(8);
  const nChannels = buf.readUInt16LE(12);
  const nSamples = buf.readUInt32LE(14);
  const sampleRateHz = buf.readDoubleLE(18);
  const nameCount = buf.readUInt16LE(26);

  let off = 28;
  const channelNames: string[] = [];
  for (let i = 0; i < nameCount; i++) {
    const len = buf.readUInt16LE(off); off += 2;
    channelNames.push(buf.toString("utf8", off, off + len)); off += len;
  }

  const labels = new Uint8Array(nEpochs);
  for (let i = 0; i < nEpochs; i++) {
    const code = buf.readUInt8(off + i);
    if (code > 2) {
      throw new RangeError(`label code ${code} is outside {0, 1, 2}`);
    }
    labels[i] = code;
  }
  off += nEpochs;

  const count = nEpochs * nChannels * nSamples;
  if (buf.length !== off + 8 * count) {
    throw new RangeError(`expected ${off + 8 * count} bytes, file has ${buf.length}`);
  }
  const payload = new Float64Array(count);
  for (let i = 0; i < count; i++) {
    payload[i] = buf.readDoubleLE(off + 8 * i);
  }
  return { subjectId, sampleRateHz, channelNames, labels, payload, nEpochs, nChannels, nSamples };
}
