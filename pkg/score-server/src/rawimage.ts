/** Raw float32 image container: "R2D2" + u32 width + u32 height + u32 dtype(1) LE, row-major f32 payload. */

import { readFileSync, writeFileSync } from "node:fs";

export const RAW_MAGIC = "R2D2";
export const DTYPE_F32 = 1;

export interface RawImage {
  width: number;
  height: number;
  data: Float64Array; // row-major, length width * height
}

export function decodeRaw(buf: Buffer): RawImage {
  if (buf.length < 16) throw new Error(`header truncated: ${buf.length} bytes`);
  if (buf.toString("latin1", 0, 4) !== RAW_MAGIC) {
    throw new Error("bad magic, not a raw image");
  }
  const width = buf.readUInt32LE(4);
  const height = buf.readUInt32LE(8);
  const dtype = buf.readUInt32LE(12);
  if (dtype !== DTYPE_F32) throw new Error(`unsupported dtype code ${dtype}`);
  if (width === 0 || height === 0) throw new Error("zero image dimension");
  const expected = width * height * 4;
  if (buf.length - 16 !== expected) {
    throw new Error(`expected ${expected} payload bytes, got ${buf.length - 16}`);
  }
  const f32 = new Float32Array(buf.buffer, buf.byteOffset + 16, width * height);
  const data = new Float64Array(width * height);
  for (let i = 0; i < data.length; i++) data[i] = f32[i];
  return { width, height, data };
}

export function encodeRaw(width: number, height: number, data: Float64Array): Buffer {
  if (data.length !== width * height) {
    throw new Error(`payload has ${data.length} pixels, header says ${width * height}`);
  }
  const buf = Buffer.alloc(16 + data.length * 4);
  buf.write(RAW_MAGIC, 0, "latin1");
  buf.writeUInt32LE(width, 4);
  buf.writeUInt32LE(height, 8);
  buf.writeUInt32LE(DTYPE_F32, 12);
  for (let i = 0; i < data.length; i++) {
    if (!Number.isFinite(data[i])) throw new Error("non-finite pixel value");
    buf.writeFloatLE(data[i], 16 + i * 4);
  }
  return buf;
}

export function readRaw(path: string): RawImage {
  return decodeRaw(readFileSync(path));
}

export function writeRaw(path: string, width: number, height: number, data: Float64Array): void {
  writeFileSync(path, encodeRaw(width, height, data));
}
