/** NIfTI-1 I/O for the predictor file protocol.
 *
 * Reads/writes little-endian single-file `.nii` / `.nii.gz`. 3D volumes
 * become {data, dims, spacing}; 4D files are channels-last on disk and
 * returned channels-first. Data is stored in on-disk (Fortran) order, so
 * `data[i1 + d1*(i2 + d2*i3)]` matches the producer's layout exactly.
 */

import * as fs from "node:fs";
import * as zlib from "node:zlib";

export interface Volume3D {
  dims: [number, number, number];
  spacing: [number, number, number];
  data: Float64Array;
  isInteger: boolean;
}

export interface SoftMap {
  dims: [number, number, number];
  spacing: [number, number, number];
  channels: number;
  /** channels-first: data[c * voxels + p] */
  data: Float64Array;
}

const HEADER_SIZE = 348;
const VOX_OFFSET = 352;

interface DtypeInfo {
  bytes: number;
  isInteger: boolean;
  read: (buf: Buffer, off: number) => number;
}

const DTYPE_TABLE: Record<number, DtypeInfo> = {
  2: { bytes: 1, isInteger: true, read: (b, o) => b.readUInt8(o) },
  4: { bytes: 2, isInteger: true, read: (b, o) => b.readInt16LE(o) },
  8: { bytes: 4, isInteger: true, read: (b, o) => b.readInt32LE(o) },
  16: { bytes: 4, isInteger: false, read: (b, o) => b.readFloatLE(o) },
  64: { bytes: 8, isInteger: false, read: (b, o) => b.readDoubleLE(o) },
  256: { bytes: 1, isInteger: true, read: (b, o) => b.readInt8(o) },
  512: { bytes: 2, isInteger: true, read: (b, o) => b.readUInt16LE(o) },
};

function readRaw(path: string): Buffer {
  let buf = fs.readFileSync(path);
  if (buf.length >= 2 && buf[0] === 0x1f && buf[1] === 0x8b) {
    buf = zlib.gunzipSync(buf);
  }
  return buf;
}

function parseHeader(buf: Buffer, path: string) {
  if (buf.length < VOX_OFFSET) {
    throw new Error(`${path}: truncated NIfTI header (${buf.length} bytes)`);
  }
  if (buf.readInt32LE(0) !== HEADER_SIZE) {
    throw new Error(`${path}: not a little-endian NIfTI-1 file`);
  }
  const magic = buf.toString("latin1", 344, 347);
  if (magic !== "n+1") {
    throw new Error(`${path}: bad magic ${JSON.stringify(magic)}`);
  }
  const ndim = buf.readInt16LE(40);
  if (ndim !== 3 && ndim !== 4) {
    throw new Error(`${path}: unsupported rank ${ndim}`);
  }
  const dims: number[] = [];
  for (let i = 0; i < ndim; i++) dims.push(buf.readInt16LE(42 + 2 * i));
  const datatype = buf.readInt16LE(70);
  const info = DTYPE_TABLE[datatype];
  if (info === undefined) {
    throw new Error(`${path}: unsupported datatype ${datatype}`);
  }
  const spacing: [number, number, number] = [
    buf.readFloatLE(80), buf.readFloatLE(84), buf.readFloatLE(88)];
  const voxOffset = Math.round(buf.readFloatLE(108));
  const slope = buf.readFloatLE(112);
  const inter = buf.readFloatLE(116);
  return { dims, datatype, info, spacing, voxOffset, slope, inter };
}

function readData(buf: Buffer, path: string): {
  dims: number[]; spacing: [number, number, number];
  data: Float64Array; isInteger: boolean;
} {
  const h = parseHeader(buf, path);
  const count = h.dims.reduce((a, b) => a * b, 1);
  const need = h.voxOffset + count * h.info.bytes;
  if (buf.length < need) {
    throw new Error(`${path}: truncated data (${buf.length} < ${need} bytes)`);
  }
  const data = new Float64Array(count);
  let off = h.voxOffset;
  for (let i = 0; i < count; i++) {
    data[i] = h.info.read(buf, off);
    off += h.info.bytes;
  }
  let isInteger = h.info.isInteger;
  if (h.slope !== 0 && (h.slope !== 1 || h.inter !== 0)) {
    for (let i = 0; i < count; i++) data[i] = data[i] * h.slope + h.inter;
    isInteger = false;
  }
  return { dims: h.dims, spacing: h.spacing, data, isInteger };
}

export function readVolume(path: string): Volume3D {
  const parsed = readData(readRaw(path), path);
  if (parsed.dims.length !== 3) {
    throw new Error(`${path}: expected a 3D volume, got rank ${parsed.dims.length}`);
  }
  return {
    dims: parsed.dims as [number, number, number],
    spacing: parsed.spacing,
    data: parsed.data,
    isInteger: parsed.isInteger,
  };
}

export function readSoftMap(path: string): SoftMap {
  const parsed = readData(readRaw(path), path);
  if (parsed.dims.length !== 4) {
    throw new Error(`${path}: expected a 4D soft map, got rank ${parsed.dims.length}`);
  }
  const [d1, d2, d3, c] = parsed.dims;
  // channels are the slowest on-disk axis, so the flat layout is already
  // channels-first over the Fortran-ordered spatial block
  return {
    dims: [d1, d2, d3],
    spacing: parsed.spacing,
    channels: c,
    data: parsed.data,
  };
}

function packHeader(dims: number[], spacing: [number, number, number],
                    datatype: number, bitpix: number): Buffer {
  const buf = Buffer.alloc(VOX_OFFSET);
  buf.writeInt32LE(HEADER_SIZE, 0);
  buf.writeInt16LE(dims.length, 40);
  const dim8 = [...dims, 1, 1, 1, 1, 1, 1, 1].slice(0, 7);
  dim8.forEach((d, i) => buf.writeInt16LE(d, 42 + 2 * i));
  buf.writeInt16LE(datatype, 70);
  buf.writeInt16LE(bitpix, 72);
  buf.writeFloatLE(1.0, 76);
  spacing.forEach((s, i) => buf.writeFloatLE(s, 80 + 4 * i));
  buf.writeFloatLE(1.0, 92);
  buf.writeFloatLE(VOX_OFFSET, 108);
  buf.writeFloatLE(1.0, 112);
  buf.writeFloatLE(0.0, 116);
  buf.writeUInt8(2, 123); // mm
  buf.write("synthbrain-trainer", 148, "latin1");
  buf.writeInt16LE(0, 252);
  buf.writeInt16LE(1, 254);
  buf.writeFloatLE(spacing[0], 280);
  buf.writeFloatLE(spacing[1], 300);
  buf.writeFloatLE(spacing[2], 320);
  buf.write("n+1\0", 344, "latin1");
  return buf;
}

function writeRaw(path: string, payload: Buffer): void {
  if (path.endsWith(".gz")) {
    fs.writeFileSync(path, zlib.gzipSync(payload));
  } else {
    fs.writeFileSync(path, payload);
  }
}

export function writeVolume(path: string, vol: Volume3D,
                            asInteger = false): void {
  const count = vol.dims[0] * vol.dims[1] * vol.dims[2];
  if (asInteger) {
    const body = Buffer.alloc(count * 4);
    for (let i = 0; i < count; i++) body.writeInt32LE(Math.round(vol.data[i]), 4 * i);
    writeRaw(path, Buffer.concat([packHeader(vol.dims, vol.spacing, 8, 32), body]));
    return;
  }
  const body = Buffer.alloc(count * 4);
  for (let i = 0; i < count; i++) body.writeFloatLE(vol.data[i], 4 * i);
  writeRaw(path, Buffer.concat([packHeader(vol.dims, vol.spacing, 16, 32), body]));
}

export function writeSoftMap(path: string, soft: SoftMap): void {
  const count = soft.channels * soft.dims[0] * soft.dims[1] * soft.dims[2];
  if (soft.data.length !== count) {
    throw new Error(`soft map data length ${soft.data.length} != ${count}`);
  }
  const body = Buffer.alloc(count * 4);
  for (let i = 0; i < count; i++) body.writeFloatLE(soft.data[i], 4 * i);
  const header = packHeader([...soft.dims, soft.channels], soft.spacing, 16, 32);
  writeRaw(path, Buffer.concat([header, body]));
}
