/**
 * Denoising score-matching trainer for the tiny conv net.
 *
 * Each draw samples an image, a time t ~ U[eps, 1] (geometric sigma(t)), and
 * a noise field z; the raw net output on x0 + sigma*z is regressed onto -z,
 * so the per-draw objective mean((r + z)^2) equals the sigma^2-weighted DSM
 * loss of the implied score r / sigma.
 */

import { dsmLoss, ScoreFn } from "./analytic.js";
import { TinyScoreNet, ForwardCache, LayerGrads } from "./net.js";
import { Rng } from "./rng.js";
import {
  DEFAULT_EPSILON,
  DEFAULT_SIGMA_MAX,
  DEFAULT_SIGMA_MIN,
  logSigmaEmbed,
  sigmaAt,
} from "./schedule.js";

export interface TrainConfig {
  steps: number;
  batch: number;
  lr: number;
  seed: number;
  cropSize: number; // 0 trains on the full image
  hidden: number;
  window: number; // running-loss window in steps
  epsilon: number;
  sigmaMin: number;
  sigmaMax: number;
}

export const DEFAULT_TRAIN: TrainConfig = {
  steps: 1500,
  batch: 4,
  lr: 2e-3,
  seed: 0,
  cropSize: 32,
  hidden: 8,
  window: 50,
  epsilon: DEFAULT_EPSILON,
  sigmaMin: DEFAULT_SIGMA_MIN,
  sigmaMax: DEFAULT_SIGMA_MAX,
};

export interface TrainResult {
  net: TinyScoreNet;
  initialLoss: number; // running DSM loss over the first window
  finalLoss: number; // running DSM loss over the last window
  losses: number[];
}

class Adam {
  private m: Float64Array[];
  private v: Float64Array[];
  private t = 0;

  constructor(params: Float64Array[]) {
    this.m = params.map((p) => new Float64Array(p.length));
    this.v = params.map((p) => new Float64Array(p.length));
  }

  step(params: Float64Array[], grads: Float64Array[], lr: number): void {
    this.t += 1;
    const b1 = 0.9;
    const b2 = 0.999;
    const c1 = 1 - Math.pow(b1, this.t);
    const c2 = 1 - Math.pow(b2, this.t);
    for (let j = 0; j < params.length; j++) {
      const p = params[j];
      const g = grads[j];
      const m = this.m[j];
      const v = this.v[j];
      for (let i = 0; i < p.length; i++) {
        m[i] = b1 * m[i] + (1 - b1) * g[i];
        v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
        p[i] -= (lr * (m[i] / c1)) / (Math.sqrt(v[i] / c2) + 1e-8);
      }
    }
  }
}

function flatParams(net: TinyScoreNet): Float64Array[] {
  const out: Float64Array[] = [];
  for (const l of net.layers) out.push(l.kernel, l.bias, l.cond, l.gain);
  return out;
}

function flatGrads(grads: LayerGrads[]): Float64Array[] {
  const out: Float64Array[] = [];
  for (const g of grads) out.push(g.kernel, g.bias, g.cond, g.gain);
  return out;
}

function mean(xs: number[]): number {
  let s = 0;
  for (const x of xs) s += x;
  return s / xs.length;
}

/** Train on >= 100 square toy images; throws if the loss goes non-finite. */
export function trainTiny(
  images: Float64Array[],
  size: number,
  cfg: TrainConfig = DEFAULT_TRAIN,
  onStep?: (step: number, loss: number) => void,
): TrainResult {
  if (images.length < 100) {
    throw new Error(`training needs >= 100 images, got ${images.length}`);
  }
  for (const img of images) {
    if (img.length !== size * size) throw new Error("image size mismatch");
  }
  const crop = cfg.cropSize > 0 ? Math.min(cfg.cropSize, size) : size;
  const rng = new Rng(cfg.seed);
  const net = TinyScoreNet.init(cfg.hidden, rng.u32());
  const params = flatParams(net);
  const adam = new Adam(params);
  const losses: number[] = [];
  const n = crop * crop;
  const z = new Float64Array(n);
  const x = new Float64Array(n);
  const cache: ForwardCache = { width: 0, height: 0, embed: 0, inputs: [], convs: [], output: x };

  for (let step = 0; step < cfg.steps; step++) {
    const grads = net.zeroGrads();
    let lossAcc = 0;
    for (let b = 0; b < cfg.batch; b++) {
      const img = images[rng.int(images.length)];
      const oy = rng.int(size - crop + 1);
      const ox = rng.int(size - crop + 1);
      const t = cfg.epsilon + (1 - cfg.epsilon) * rng.float();
      const sigma = sigmaAt(t, cfg.sigmaMin, cfg.sigmaMax);
      const scale = 1 / Math.sqrt(sigma * sigma + 1);
      rng.fillGauss(z);
      for (let y = 0; y < crop; y++) {
        for (let c = 0; c < crop; c++) {
          const i = y * crop + c;
          x[i] = (img[(oy + y) * size + (ox + c)] + sigma * z[i]) * scale;
        }
      }
      const out = net.forward(x, crop, crop, logSigmaEmbed(sigma, cfg.sigmaMin, cfg.sigmaMax), cache);
      const dOut = new Float64Array(n);
      let loss = 0;
      for (let i = 0; i < n; i++) {
        const r = out[i] + z[i];
        loss += r * r;
        dOut[i] = (2 * r) / (n * cfg.batch);
      }
      lossAcc += loss / n / cfg.batch;
      net.backward(cache, dOut, grads);
    }
    if (!Number.isFinite(lossAcc)) {
      throw new Error(`training diverged at step ${step}: loss is not finite`);
    }
    adam.step(params, flatGrads(grads), cfg.lr);
    losses.push(lossAcc);
    if (onStep) onStep(step, lossAcc);
  }

  const w = Math.min(cfg.window, losses.length);
  return {
    net,
    initialLoss: w > 0 ? mean(losses.slice(0, w)) : NaN,
    finalLoss: w > 0 ? mean(losses.slice(losses.length - w)) : NaN,
    losses,
  };
}

/** Mean DSM loss of a score model over fixed seeded draws from a corpus. */
export function evalDsm(
  score: ScoreFn,
  images: Float64Array[],
  size: number,
  draws: number,
  seed: number,
  epsilon = DEFAULT_EPSILON,
  sigmaMin = DEFAULT_SIGMA_MIN,
  sigmaMax = DEFAULT_SIGMA_MAX,
): number {
  const rng = new Rng(seed);
  const z = new Float64Array(size * size);
  let acc = 0;
  for (let d = 0; d < draws; d++) {
    const img = images[rng.int(images.length)];
    const t = epsilon + (1 - epsilon) * rng.float();
    const sigma = sigmaAt(t, sigmaMin, sigmaMax);
    rng.fillGauss(z);
    acc += dsmLoss(score, img, sigma, z, size, size);
  }
  return acc / draws;
}
