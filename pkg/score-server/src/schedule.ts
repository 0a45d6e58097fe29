/** Geometric noise schedule shared with the sampling pipeline. */

export const DEFAULT_SIGMA_MIN = 0.01;
export const DEFAULT_SIGMA_MAX = 378.0;
export const DEFAULT_EPSILON = 1e-5;

/** sigma(t) = sigma_min * (sigma_max / sigma_min)^t for t in [0, 1]. */
export function sigmaAt(
  t: number,
  sigmaMin: number = DEFAULT_SIGMA_MIN,
  sigmaMax: number = DEFAULT_SIGMA_MAX,
): number {
  if (!(t >= 0 && t <= 1)) throw new RangeError(`t=${t} outside [0, 1]`);
  return sigmaMin * Math.pow(sigmaMax / sigmaMin, t);
}

/**
 * Normalized log-sigma used as the scalar conditioning embedding:
 * maps [sigma_min, sigma_max] onto [-1, 1] in log space.
 */
export function logSigmaEmbed(
  sigma: number,
  sigmaMin: number = DEFAULT_SIGMA_MIN,
  sigmaMax: number = DEFAULT_SIGMA_MAX,
): number {
  const lo = Math.log(sigmaMin);
  const hi = Math.log(sigmaMax);
  return (2 * (Math.log(sigma) - lo)) / (hi - lo) - 1;
}
