/**
 * Weight checkpoint: magic "TSN1" + u32 layer count + per-layer dims
 * (u32 outC, inC, kh, kw) + float32 LE weights, per layer in order:
 * kernel, bias, additive sigma projection, multiplicative sigma projection.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { ConvLayer, TinyScoreNet } from "./net.js";

export const CKPT_MAGIC = "TSN1";

export function encodeCheckpoint(net: TinyScoreNet): Buffer {
  let weightCount = 0;
  for (const l of net.layers)
    weightCount += l.kernel.length + l.bias.length + l.cond.length + l.gain.length;
  const buf = Buffer.alloc(8 + net.layers.length * 16 + weightCount * 4);
  buf.write(CKPT_MAGIC, 0, "latin1");
  buf.writeUInt32LE(net.layers.length, 4);
  let off = 8;
  for (const l of net.layers) {
    buf.writeUInt32LE(l.outC, off);
    buf.writeUInt32LE(l.inC, off + 4);
    buf.writeUInt32LE(l.kh, off + 8);
    buf.writeUInt32LE(l.kw, off + 12);
    off += 16;
  }
  for (const l of net.layers) {
    for (const arr of [l.kernel, l.bias, l.cond, l.gain]) {
      for (let i = 0; i < arr.length; i++) {
        buf.writeFloatLE(arr[i], off);
        off += 4;
      }
    }
  }
  return buf;
}

export function decodeCheckpoint(buf: Buffer): TinyScoreNet {
  if (buf.length < 8) throw new Error(`checkpoint truncated: ${buf.length} bytes`);
  if (buf.toString("latin1", 0, 4) !== CKPT_MAGIC) {
    throw new Error("bad magic, not a weight checkpoint");
  }
  const count = buf.readUInt32LE(4);
  if (count === 0 || count > 64) throw new Error(`implausible layer count ${count}`);
  if (buf.length < 8 + count * 16) throw new Error("checkpoint truncated in dims table");
  const layers: ConvLayer[] = [];
  let off = 8;
  for (let l = 0; l < count; l++) {
    const outC = buf.readUInt32LE(off);
    const inC = buf.readUInt32LE(off + 4);
    const kh = buf.readUInt32LE(off + 8);
    const kw = buf.readUInt32LE(off + 12);
    off += 16;
    if (outC === 0 || inC === 0 || kh % 2 !== 1 || kw % 2 !== 1) {
      throw new Error(`bad layer dims ${outC}x${inC}x${kh}x${kw}`);
    }
    layers.push(new ConvLayer(outC, inC, kh, kw));
  }
  let weightCount = 0;
  for (const l of layers)
    weightCount += l.kernel.length + l.bias.length + l.cond.length + l.gain.length;
  if (buf.length - off !== weightCount * 4) {
    throw new Error(`expected ${weightCount * 4} weight bytes, got ${buf.length - off}`);
  }
  for (const l of layers) {
    for (const arr of [l.kernel, l.bias, l.cond, l.gain]) {
      for (let i = 0; i < arr.length; i++) {
        arr[i] = buf.readFloatLE(off);
        off += 4;
      }
    }
  }
  return new TinyScoreNet(layers);
}

export function saveCheckpoint(path: string, net: TinyScoreNet): void {
  writeFileSync(path, encodeCheckpoint(net));
}

export function loadCheckpoint(path: string): TinyScoreNet {
  return decodeCheckpoint(readFileSync(path));
}
