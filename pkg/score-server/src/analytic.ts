/** Analytic score oracles for Gaussian and Gaussian-mixture priors. */

/** Flat row-major score field for a flat row-major image. */
export type ScoreFn = (
  x: Float64Array,
  sigma: number,
  width: number,
  height: number,
) => Float64Array;

function meanAt(mean: number | Float64Array, i: number): number {
  return typeof mean === "number" ? mean : mean[i];
}

function checkMeanLength(mean: number | Float64Array, n: number): void {
  if (typeof mean !== "number" && mean.length !== n) {
    throw new Error(`mean field has ${mean.length} pixels, image has ${n}`);
  }
}

/**
 * Score of x ~ N(m, s^2 I) blurred by noise level sigma:
 * s(x, sigma) = -(x - m) / (s^2 + sigma^2).
 */
export function gaussianScore(mean: number | Float64Array, std: number): ScoreFn {
  if (!(std >= 0)) throw new RangeError(`std=${std} must be >= 0`);
  return (x, sigma) => {
    if (!(sigma > 0)) throw new RangeError(`sigma=${sigma} must be > 0`);
    checkMeanLength(mean, x.length);
    const v = std * std + sigma * sigma;
    const out = new Float64Array(x.length);
    for (let i = 0; i < x.length; i++) out[i] = -(x[i] - meanAt(mean, i)) / v;
    return out;
  };
}

export interface GmmComponent {
  weight: number;
  mean: number | Float64Array;
  std: number;
}

/**
 * Pixelwise Gaussian-mixture score via log-domain responsibilities:
 * s = sum_k r_k(x) * (-(x - m_k) / (s_k^2 + sigma^2)).
 */
export function gmmScore(components: GmmComponent[]): ScoreFn {
  if (components.length === 0) throw new Error("mixture needs at least one component");
  for (const c of components) {
    if (!(c.weight > 0)) throw new RangeError(`weight=${c.weight} must be > 0`);
    if (!(c.std >= 0)) throw new RangeError(`std=${c.std} must be >= 0`);
  }
  return (x, sigma) => {
    if (!(sigma > 0)) throw new RangeError(`sigma=${sigma} must be > 0`);
    for (const c of components) checkMeanLength(c.mean, x.length);
    const k = components.length;
    const logW = components.map((c) => Math.log(c.weight));
    const vars = components.map((c) => c.std * c.std + sigma * sigma);
    const out = new Float64Array(x.length);
    const logp = new Float64Array(k);
    for (let i = 0; i < x.length; i++) {
      let top = -Infinity;
      for (let j = 0; j < k; j++) {
        const d = x[i] - meanAt(components[j].mean, i);
        logp[j] = logW[j] - 0.5 * Math.log(vars[j]) - (d * d) / (2 * vars[j]);
        if (logp[j] > top) top = logp[j];
      }
      let norm = 0;
      for (let j = 0; j < k; j++) norm += Math.exp(logp[j] - top);
      let s = 0;
      for (let j = 0; j < k; j++) {
        const r = Math.exp(logp[j] - top) / norm;
        s += (r * -(x[i] - meanAt(components[j].mean, i))) / vars[j];
      }
      out[i] = s;
    }
    return out;
  };
}

/**
 * Denoising score-matching loss for one draw x = x0 + sigma * z:
 * sigma^2 * mean((s(x, sigma) + z / sigma)^2).
 */
export function dsmLoss(
  score: ScoreFn,
  x0: Float64Array,
  sigma: number,
  z: Float64Array,
  width: number,
  height: number,
): number {
  if (x0.length !== z.length) throw new Error("x0 and z sizes differ");
  const x = new Float64Array(x0.length);
  for (let i = 0; i < x.length; i++) x[i] = x0[i] + sigma * z[i];
  const s = score(x, sigma, width, height);
  let acc = 0;
  for (let i = 0; i < x.length; i++) {
    const r = s[i] + z[i] / sigma;
    acc += r * r;
  }
  return (sigma * sigma * acc) / x.length;
}
