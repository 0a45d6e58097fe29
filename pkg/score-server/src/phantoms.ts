/** Random piecewise-constant ellipse phantoms in [0, 1], toy training data. */

import { Rng } from "./rng.js";

export function makePhantom(size: number, rng: Rng): Float64Array {
  const img = new Float64Array(size * size).fill(0.05);
  const nEllipses = 3 + rng.int(4);
  for (let e = 0; e < nEllipses; e++) {
    const cy = rng.uniform(0.15, 0.85) * size;
    const cx = rng.uniform(0.15, 0.85) * size;
    const a = rng.uniform(size / 8, size / 3);
    const b = rng.uniform(size / 8, size / 3);
    const theta = rng.uniform(0, Math.PI);
    const value = rng.uniform(0.2, 0.95);
    const ct = Math.cos(theta);
    const st = Math.sin(theta);
    for (let y = 0; y < size; y++) {
      for (let x = 0; x < size; x++) {
        const dy = y - cy;
        const dx = x - cx;
        const u = (dx * ct + dy * st) / a;
        const v = (-dx * st + dy * ct) / b;
        if (u * u + v * v <= 1) img[y * size + x] = value;
      }
    }
  }
  return img;
}

export function makePhantomSet(n: number, size: number, seed: number): Float64Array[] {
  const rng = new Rng(seed);
  const out: Float64Array[] = [];
  for (let i = 0; i < n; i++) out.push(makePhantom(size, rng));
  return out;
}
