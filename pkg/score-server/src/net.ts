/**
 * Small convolutional score net conditioned on sigma via a scalar embedding.
 *
 * The net sees the variance-normalized image x / sqrt(sigma^2 + 1); each
 * layer modulates its convolution output with the scalar embedding
 * c = logSigmaEmbed(sigma) as out = conv * (1 + gain[oc] * c) + bias[oc] +
 * cond[oc] * c. The gain term matters: the ideal raw output -z needs a
 * sigma-dependent amplitude (slope -sqrt(sigma^2+1)/sigma spans two decades
 * over the schedule), which a bias-only shift cannot express. The raw output
 * is trained toward -z, so the score is r / sigma and the regression target
 * stays unit scale across the whole sigma range.
 */

import { Rng } from "./rng.js";
import { logSigmaEmbed } from "./schedule.js";

export class ConvLayer {
  outC: number;
  inC: number;
  kh: number;
  kw: number;
  kernel: Float64Array; // [outC][inC][kh][kw]
  bias: Float64Array; // [outC]
  cond: Float64Array; // [outC], additive projection of the sigma embedding
  gain: Float64Array; // [outC], multiplicative projection, neutral at 0

  constructor(outC: number, inC: number, kh: number, kw: number) {
    this.outC = outC;
    this.inC = inC;
    this.kh = kh;
    this.kw = kw;
    this.kernel = new Float64Array(outC * inC * kh * kw);
    this.bias = new Float64Array(outC);
    this.cond = new Float64Array(outC);
    this.gain = new Float64Array(outC);
  }
}

export interface LayerGrads {
  kernel: Float64Array;
  bias: Float64Array;
  cond: Float64Array;
  gain: Float64Array;
}

export interface ForwardCache {
  width: number;
  height: number;
  embed: number;
  inputs: Float64Array[]; // input plane stack of each layer, post-activation
  convs: Float64Array[]; // raw convolution planes before the sigma modulation
  output: Float64Array;
}

/** Plain zero-padded convolution: out[oc] = sum_ic kernel[oc,ic] (*) in[ic]. */
function convForward(layer: ConvLayer, input: Float64Array, w: number, h: number): Float64Array {
  const { outC, inC, kh, kw } = layer;
  const plane = w * h;
  const out = new Float64Array(outC * plane);
  const ph = (kh - 1) >> 1;
  const pw = (kw - 1) >> 1;
  for (let oc = 0; oc < outC; oc++) {
    const base = oc * plane;
    for (let ic = 0; ic < inC; ic++) {
      const inBase = ic * plane;
      for (let ky = 0; ky < kh; ky++) {
        const dy = ky - ph;
        const y0 = Math.max(0, -dy);
        const y1 = Math.min(h, h - dy);
        for (let kx = 0; kx < kw; kx++) {
          const dx = kx - pw;
          const kval = layer.kernel[((oc * inC + ic) * kh + ky) * kw + kx];
          if (kval === 0) continue;
          const x0 = Math.max(0, -dx);
          const x1 = Math.min(w, w - dx);
          for (let y = y0; y < y1; y++) {
            let o = base + y * w + x0;
            let p = inBase + (y + dy) * w + x0 + dx;
            for (let x = x0; x < x1; x++) out[o++] += kval * input[p++];
          }
        }
      }
    }
  }
  return out;
}

/** Gradients of the plain convolution; dIn is skipped when wantDIn is false. */
function convBackward(
  layer: ConvLayer,
  input: Float64Array,
  dConv: Float64Array,
  w: number,
  h: number,
  grads: LayerGrads,
  wantDIn: boolean,
): Float64Array | null {
  const { outC, inC, kh, kw } = layer;
  const plane = w * h;
  const ph = (kh - 1) >> 1;
  const pw = (kw - 1) >> 1;
  const dIn = wantDIn ? new Float64Array(inC * plane) : null;
  for (let oc = 0; oc < outC; oc++) {
    const base = oc * plane;
    for (let ic = 0; ic < inC; ic++) {
      const inBase = ic * plane;
      for (let ky = 0; ky < kh; ky++) {
        const dy = ky - ph;
        const y0 = Math.max(0, -dy);
        const y1 = Math.min(h, h - dy);
        for (let kx = 0; kx < kw; kx++) {
          const dx = kx - pw;
          const x0 = Math.max(0, -dx);
          const x1 = Math.min(w, w - dx);
          const kidx = ((oc * inC + ic) * kh + ky) * kw + kx;
          let acc = 0;
          for (let y = y0; y < y1; y++) {
            let o = base + y * w + x0;
            let p = inBase + (y + dy) * w + x0 + dx;
            for (let x = x0; x < x1; x++) acc += dConv[o++] * input[p++];
          }
          grads.kernel[kidx] += acc;
          if (dIn !== null) {
            const kval = layer.kernel[kidx];
            if (kval === 0) continue;
            for (let y = y0; y < y1; y++) {
              let o = base + y * w + x0;
              let p = inBase + (y + dy) * w + x0 + dx;
              for (let x = x0; x < x1; x++) dIn[p++] += kval * dConv[o++];
            }
          }
        }
      }
    }
  }
  return dIn;
}

export class TinyScoreNet {
  layers: ConvLayer[];

  constructor(layers: ConvLayer[]) {
    if (layers.length === 0) throw new Error("net needs at least one layer");
    for (let i = 1; i < layers.length; i++) {
      if (layers[i].inC !== layers[i - 1].outC) {
        throw new Error(`layer ${i} expects ${layers[i].inC} channels, got ${layers[i - 1].outC}`);
      }
    }
    if (layers[0].inC !== 1 || layers[layers.length - 1].outC !== 1) {
      throw new Error("net must map one channel to one channel");
    }
    this.layers = layers;
  }

  /** 4 conv layers 1 -> hidden -> hidden -> hidden -> 1, He init, zero last layer. */
  static init(hidden = 8, seed = 0): TinyScoreNet {
    const rng = new Rng(seed);
    const channels = [1, hidden, hidden, hidden, 1];
    const layers: ConvLayer[] = [];
    for (let l = 0; l < channels.length - 1; l++) {
      const layer = new ConvLayer(channels[l + 1], channels[l], 3, 3);
      const last = l === channels.length - 2;
      if (!last) {
        const std = Math.sqrt(2 / (layer.inC * layer.kh * layer.kw));
        for (let i = 0; i < layer.kernel.length; i++) layer.kernel[i] = std * rng.gauss();
      }
      layers.push(layer);
    }
    return new TinyScoreNet(layers);
  }

  numParams(): number {
    let n = 0;
    for (const l of this.layers)
      n += l.kernel.length + l.bias.length + l.cond.length + l.gain.length;
    return n;
  }

  /** Raw output r(xNorm, embed); ReLU between layers, linear last layer. */
  forward(xNorm: Float64Array, w: number, h: number, embed: number, cache?: ForwardCache): Float64Array {
    if (xNorm.length !== w * h) throw new Error(`input has ${xNorm.length} pixels, grid says ${w * h}`);
    let cur = xNorm;
    if (cache) {
      cache.width = w;
      cache.height = h;
      cache.embed = embed;
      cache.inputs = [];
      cache.convs = [];
    }
    const plane = w * h;
    for (let l = 0; l < this.layers.length; l++) {
      const layer = this.layers[l];
      if (cache) cache.inputs.push(cur);
      const conv = convForward(layer, cur, w, h);
      if (cache) cache.convs.push(conv);
      const out = cache ? new Float64Array(conv.length) : conv;
      for (let oc = 0; oc < layer.outC; oc++) {
        const g = 1 + layer.gain[oc] * embed;
        const b = layer.bias[oc] + layer.cond[oc] * embed;
        const base = oc * plane;
        for (let i = base; i < base + plane; i++) out[i] = conv[i] * g + b;
      }
      if (l < this.layers.length - 1) {
        for (let i = 0; i < out.length; i++) if (out[i] < 0) out[i] = 0;
      }
      cur = out;
    }
    if (cache) cache.output = cur;
    return cur;
  }

  /**
   * Accumulate parameter gradients for dLoss/dOutput, reusing a forward cache.
   * Gradient of the input plane is not materialized.
   */
  backward(cache: ForwardCache, dOut: Float64Array, grads: LayerGrads[]): void {
    const { width: w, height: h, embed } = cache;
    const plane = w * h;
    let d: Float64Array | null = dOut;
    for (let l = this.layers.length - 1; l >= 0; l--) {
      const layer = this.layers[l];
      if (l < this.layers.length - 1) {
        // ReLU mask: the input of the next layer is this layer's activation
        const act = cache.inputs[l + 1];
        for (let i = 0; i < d!.length; i++) if (act[i] <= 0) d![i] = 0;
      }
      // undo the modulation: out = conv * (1 + gain*c) + bias + cond*c
      const conv = cache.convs[l];
      const dConv = new Float64Array(d!.length);
      for (let oc = 0; oc < layer.outC; oc++) {
        const g = 1 + layer.gain[oc] * embed;
        const base = oc * plane;
        let dSum = 0;
        let dDot = 0;
        for (let i = base; i < base + plane; i++) {
          dSum += d![i];
          dDot += d![i] * conv[i];
          dConv[i] = d![i] * g;
        }
        grads[l].bias[oc] += dSum;
        grads[l].cond[oc] += dSum * embed;
        grads[l].gain[oc] += dDot * embed;
      }
      d = convBackward(layer, cache.inputs[l], dConv, w, h, grads[l], l > 0);
    }
  }

  /** Score field s(x, sigma) = r(x / sqrt(sigma^2 + 1), embed(sigma)) / sigma. */
  score(x: Float64Array, sigma: number, w: number, h: number): Float64Array {
    if (!(sigma > 0)) throw new RangeError(`sigma=${sigma} must be > 0`);
    const scale = 1 / Math.sqrt(sigma * sigma + 1);
    const xn = new Float64Array(x.length);
    for (let i = 0; i < x.length; i++) xn[i] = x[i] * scale;
    const r = this.forward(xn, w, h, logSigmaEmbed(sigma));
    for (let i = 0; i < r.length; i++) r[i] /= sigma;
    return r;
  }

  zeroGrads(): LayerGrads[] {
    return this.layers.map((l) => ({
      kernel: new Float64Array(l.kernel.length),
      bias: new Float64Array(l.bias.length),
      cond: new Float64Array(l.cond.length),
      gain: new Float64Array(l.gain.length),
    }));
  }
}
