#!/usr/bin/env node
/**
 * score-server CLI.
 *
 * Serve:  score-server --mode analytic-gaussian|analytic-gmm|neural
 *                      --listen host:port [--checkpoint model.tsn]
 *                      [--mean 0.5|img.raw] [--std 0.3] [--gmm mixture.json]
 *                      [--sigma-min 0.01] [--sigma-max 378]
 * Train:  score-server train --out model.tsn [--steps N] [--images N]
 *                      [--size N] [--crop N] [--batch N] [--lr F]
 *                      [--seed N] [--hidden N] [--window N]
 */

import { readFileSync } from "node:fs";
import { parseArgs } from "node:util";
import { gaussianScore, gmmScore, GmmComponent, ScoreFn } from "./analytic.js";
import { loadCheckpoint, saveCheckpoint } from "./checkpoint.js";
import { makePhantomSet } from "./phantoms.js";
import { readRaw } from "./rawimage.js";
import { DEFAULT_SIGMA_MAX, DEFAULT_SIGMA_MIN } from "./schedule.js";
import { ScoreServer } from "./server.js";
import { DEFAULT_TRAIN, trainTiny } from "./train.js";

class UsageError extends Error {}

function meanFromText(text: string): number | Float64Array {
  const v = Number(text);
  if (Number.isFinite(v) && text.trim() !== "") return v;
  return readRaw(text).data;
}

function buildModel(values: Record<string, string | undefined>): ScoreFn {
  const mode = values.mode;
  if (mode === "analytic-gaussian") {
    const mean = meanFromText(values.mean ?? "0.5");
    const std = Number(values.std ?? "0.3");
    if (!Number.isFinite(std)) throw new UsageError(`bad --std ${values.std}`);
    return gaussianScore(mean, std);
  }
  if (mode === "analytic-gmm") {
    if (!values.gmm) throw new UsageError("analytic-gmm mode needs --gmm <json>");
    const spec = JSON.parse(readFileSync(values.gmm, "utf8")) as {
      weight: number;
      mean: number | string;
      std: number;
    }[];
    const components: GmmComponent[] = spec.map((c) => ({
      weight: c.weight,
      mean: typeof c.mean === "string" ? readRaw(c.mean).data : c.mean,
      std: c.std,
    }));
    return gmmScore(components);
  }
  if (mode === "neural") {
    if (!values.checkpoint) throw new UsageError("neural mode needs --checkpoint <path>");
    const net = loadCheckpoint(values.checkpoint);
    return (x, sigma, w, h) => net.score(x, sigma, w, h);
  }
  throw new UsageError(`unknown --mode ${mode ?? "(missing)"}`);
}

async function serveMain(argv: string[]): Promise<number> {
  const { values } = parseArgs({
    args: argv,
    options: {
      mode: { type: "string" },
      listen: { type: "string" },
      checkpoint: { type: "string" },
      mean: { type: "string" },
      std: { type: "string" },
      gmm: { type: "string" },
      "sigma-min": { type: "string" },
      "sigma-max": { type: "string" },
    },
  });
  if (!values.listen) throw new UsageError("--listen host:port is required");
  const sep = values.listen.lastIndexOf(":");
  if (sep < 0) throw new UsageError(`bad --listen ${values.listen}`);
  const host = values.listen.slice(0, sep);
  const port = Number(values.listen.slice(sep + 1));
  if (!Number.isInteger(port) || port < 0 || port > 65535) {
    throw new UsageError(`bad port in --listen ${values.listen}`);
  }
  const model = buildModel(values);
  const server = new ScoreServer({
    model,
    sigmaMin: Number(values["sigma-min"] ?? DEFAULT_SIGMA_MIN),
    sigmaMax: Number(values["sigma-max"] ?? DEFAULT_SIGMA_MAX),
  });
  const bound = await server.listen(host, port);
  process.stdout.write(
    JSON.stringify({
      listening: `${bound.host}:${bound.port}`,
      mode: values.mode,
      sigma_min: server.sigmaMin,
      sigma_max: server.sigmaMax,
    }) + "\n",
  );
  await new Promise<void>((resolve) => {
    process.on("SIGINT", resolve);
    process.on("SIGTERM", resolve);
  });
  await server.close();
  return 0;
}

async function trainMain(argv: string[]): Promise<number> {
  const { values } = parseArgs({
    args: argv,
    options: {
      out: { type: "string" },
      steps: { type: "string" },
      images: { type: "string" },
      size: { type: "string" },
      crop: { type: "string" },
      batch: { type: "string" },
      lr: { type: "string" },
      seed: { type: "string" },
      hidden: { type: "string" },
      window: { type: "string" },
    },
  });
  if (!values.out) throw new UsageError("train needs --out <checkpoint>");
  const num = (text: string | undefined, fallback: number): number => {
    if (text === undefined) return fallback;
    const v = Number(text);
    if (!Number.isFinite(v)) throw new UsageError(`bad numeric argument ${text}`);
    return v;
  };
  const cfg = {
    ...DEFAULT_TRAIN,
    steps: num(values.steps, DEFAULT_TRAIN.steps),
    batch: num(values.batch, DEFAULT_TRAIN.batch),
    lr: num(values.lr, DEFAULT_TRAIN.lr),
    seed: num(values.seed, DEFAULT_TRAIN.seed),
    cropSize: num(values.crop, DEFAULT_TRAIN.cropSize),
    hidden: num(values.hidden, DEFAULT_TRAIN.hidden),
    window: num(values.window, DEFAULT_TRAIN.window),
  };
  const nImages = num(values.images, 120);
  const size = num(values.size, 64);
  const images = makePhantomSet(nImages, size, cfg.seed + 1);
  const t0 = Date.now();
  const result = trainTiny(images, size, cfg, (step, loss) => {
    if ((step + 1) % 100 === 0) {
      process.stderr.write(`step ${step + 1}/${cfg.steps} loss ${loss.toFixed(4)}\n`);
    }
  });
  saveCheckpoint(values.out, result.net);
  process.stdout.write(
    JSON.stringify({
      checkpoint: values.out,
      steps: cfg.steps,
      images: nImages,
      size,
      params: result.net.numParams(),
      initial_loss: result.initialLoss,
      final_loss: result.finalLoss,
      seconds: (Date.now() - t0) / 1000,
    }) + "\n",
  );
  return 0;
}

async function main(): Promise<number> {
  const argv = process.argv.slice(2);
  try {
    if (argv[0] === "train") return await trainMain(argv.slice(1));
    return await serveMain(argv);
  } catch (err) {
    if (err instanceof UsageError || (err as { code?: string }).code === "ERR_PARSE_ARGS_UNKNOWN_OPTION") {
      process.stderr.write(JSON.stringify({ error: "usage", message: String((err as Error).message) }) + "\n");
      return 2;
    }
    process.stderr.write(
      JSON.stringify({ error: (err as Error).constructor.name, message: String((err as Error).message) }) + "\n",
    );
    return 1;
  }
}

main().then((code) => {
  process.exitCode = code;
});
