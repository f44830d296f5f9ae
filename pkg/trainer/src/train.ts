/** Training loop: soft Dice loss, Adam, per-step loss log. */

import * as fs from "node:fs";

import { Adam } from "./adam.js";
import { centerCrop, listIndices, loadSample, oneHot, Role, Sample } from "./data.js";
import { softDice, softDiceLoss } from "./ops.js";
import { saveCheckpoint } from "./checkpoint.js";
import { makeRng, Tape, Tensor } from "./tensor.js";
import { denoiserConfig, segmenterConfig, UNet3D } from "./unet.js";

export interface TrainOptions {
  dataDir: string;
  role: Role;
  out: string;
  steps: number;
  lr: number;
  seed: number;
  crop: number;
  classIds?: number[];
  targetDice?: number;
  logEvery: number;
  maxSamples?: number;
}

export interface TrainResult {
  steps: number;
  finalLoss: number;
  bestDice: number;
  reachedTarget: boolean;
}

function defaultClassIds(role: Role, samples: Sample[]): number[] {
  if (role === "s1" || role === "d") return [0, 1, 2, 3, 4];
  const seen = new Set<number>();
  for (const s of samples) for (const v of s.targetLabels) seen.add(v);
  return [...seen].sort((a, b) => a - b);
}

export function trainNetwork(opts: TrainOptions): TrainResult {
  const indices = listIndices(opts.dataDir);
  if (indices.length === 0) {
    throw new Error(`no generated pairs found in ${opts.dataDir}`);
  }
  const limit = opts.maxSamples ?? indices.length;
  const samples = indices.slice(0, limit).map((i) =>
    loadSample(opts.dataDir, i, opts.role));
  const classIds = opts.classIds ?? defaultClassIds(opts.role, samples);

  const prepared = samples.map((s) => {
    const inp = centerCrop(s.input, s.inChannels, s.dims, opts.crop);
    const lab = centerCrop(s.targetLabels, 1, s.dims, opts.crop);
    // file dims are fastest-first; tensors are [C, D, H, W] slowest-first
    const shape = [s.inChannels, inp.dims[2], inp.dims[1], inp.dims[0]];
    return {
      input: new Tensor(shape, inp.data),
      target: oneHot(lab.data, classIds),
      spacing: s.spacing,
    };
  });

  const inChannels = samples[0].inChannels;
  const config = opts.role === "d"
    ? denoiserConfig(classIds.length)
    : segmenterConfig(inChannels, classIds.length);
  if (opts.role === "d" && inChannels !== classIds.length) {
    throw new Error(`denoiser expects ${classIds.length} input channels, ` +
                    `data has ${inChannels}`);
  }
  const net = new UNet3D(config, opts.seed);
  const adam = new Adam(net.params(), opts.lr);
  const rng = makeRng(opts.seed + 7);

  const logLines: string[] = ["step,loss,dice"];
  let finalLoss = Number.NaN;
  let bestDice = 0;
  let reachedTarget = false;
  let step = 0;
  for (step = 1; step <= opts.steps; step++) {
    const pick = prepared.length === 1
      ? prepared[0]
      : prepared[Math.floor(rng() * prepared.length)];
    const tape = new Tape();
    const probs = net.forward(tape, pick.input);
    const loss = softDiceLoss(tape, probs, pick.target);
    adam.zeroGrad();
    tape.backward(loss);
    adam.step();
    finalLoss = loss.data[0];
    const dice = 1.0 - finalLoss;
    bestDice = Math.max(bestDice, dice);
    if (step % opts.logEvery === 0 || step === 1 || step === opts.steps) {
      logLines.push(`${step},${finalLoss.toFixed(6)},${dice.toFixed(6)}`);
      console.log(`step ${step}: loss=${finalLoss.toFixed(4)} dice=${dice.toFixed(4)}`);
    }
    if (opts.targetDice !== undefined && dice >= opts.targetDice) {
      reachedTarget = true;
      logLines.push(`${step},${finalLoss.toFixed(6)},${dice.toFixed(6)}`);
      console.log(`reached target dice ${opts.targetDice} at step ${step}`);
      break;
    }
  }
  saveCheckpoint(opts.out, opts.role, net, classIds);
  fs.writeFileSync(`${opts.out}.log`, logLines.join("\n") + "\n");
  return {
    steps: Math.min(step, opts.steps),
    finalLoss,
    bestDice,
    reachedTarget,
  };
}

/** Mean soft Dice of a trained network on a prepared (input, one-hot) pair. */
export function evaluateDice(net: UNet3D, input: Tensor,
                             target: Float64Array): number {
  const tape = new Tape();
  return softDice(net.forward(tape, input), target);
}
