/** Predictor file protocol: read NIfTI input(s), run the network, write a
 * 4D channels-last soft-map NIfTI, exit 0. Inputs whose dims are not
 * divisible by 16 are zero-padded and the output cropped back. */

import { loadCheckpoint, setTrainable } from "./checkpoint.js";
import { readSoftMap, readVolume, writeSoftMap } from "./nifti.js";
import { Tape, Tensor } from "./tensor.js";

function padded(dim: number): number {
  return Math.ceil(dim / 16) * 16;
}

function padBlock(data: Float64Array, channels: number,
                  dims: [number, number, number],
                  target: [number, number, number]): Float64Array {
  if (dims[0] === target[0] && dims[1] === target[1] && dims[2] === target[2]) {
    return data;
  }
  const [d1, d2, d3] = dims;
  const [t1, t2, t3] = target;
  const out = new Float64Array(channels * t1 * t2 * t3);
  for (let c = 0; c < channels; c++) {
    const cb = c * d1 * d2 * d3;
    const ob = c * t1 * t2 * t3;
    for (let k = 0; k < d3; k++) {
      for (let j = 0; j < d2; j++) {
        const src = cb + k * d1 * d2 + j * d1;
        const dst = ob + k * t1 * t2 + j * t1;
        for (let i = 0; i < d1; i++) out[dst + i] = data[src + i];
      }
    }
  }
  return out;
}

function cropBlock(data: Float64Array, channels: number,
                   dims: [number, number, number],
                   target: [number, number, number]): Float64Array {
  if (dims[0] === target[0] && dims[1] === target[1] && dims[2] === target[2]) {
    return data;
  }
  const [d1, d2, d3] = dims;
  const [t1, t2, t3] = target;
  const out = new Float64Array(channels * t1 * t2 * t3);
  for (let c = 0; c < channels; c++) {
    const cb = c * d1 * d2 * d3;
    const ob = c * t1 * t2 * t3;
    for (let k = 0; k < t3; k++) {
      for (let j = 0; j < t2; j++) {
        const src = cb + k * d1 * d2 + j * d1;
        const dst = ob + k * t1 * t2 + j * t1;
        for (let i = 0; i < t1; i++) out[dst + i] = data[src + i];
      }
    }
  }
  return out;
}

export function predict(checkpointPath: string, outPath: string,
                        imagePath?: string, condPath?: string): void {
  const { meta, net } = loadCheckpoint(checkpointPath);
  setTrainable(net.params(), false);

  let dims: [number, number, number] | null = null;
  let spacing: [number, number, number] = [1, 1, 1];
  const blocks: Float64Array[] = [];
  let channels = 0;
  if (meta.role === "s1" || meta.role === "s2") {
    if (imagePath === undefined) {
      throw new Error(`role ${meta.role} requires an input image`);
    }
    const image = readVolume(imagePath);
    dims = image.dims;
    spacing = image.spacing;
    blocks.push(image.data);
    channels += 1;
  }
  if (meta.role === "s2" || meta.role === "d") {
    if (condPath === undefined) {
      throw new Error(`role ${meta.role} requires a conditioning soft map`);
    }
    const cond = readSoftMap(condPath);
    if (dims !== null && (cond.dims[0] !== dims[0] || cond.dims[1] !== dims[1]
                          || cond.dims[2] !== dims[2])) {
      throw new Error(`conditioning dims ${cond.dims} != image dims ${dims}`);
    }
    dims = cond.dims;
    if (blocks.length === 0) spacing = cond.spacing;
    blocks.push(cond.data);
    channels += cond.channels;
  }
  if (dims === null) throw new Error("no inputs provided");
  if (channels !== net.config.inChannels) {
    throw new Error(`checkpoint expects ${net.config.inChannels} input ` +
                    `channels, got ${channels}`);
  }

  const vox = dims[0] * dims[1] * dims[2];
  const stacked = new Float64Array(channels * vox);
  let off = 0;
  for (const b of blocks) {
    stacked.set(b, off);
    off += b.length;
  }
  const target: [number, number, number] = [
    padded(dims[0]), padded(dims[1]), padded(dims[2])];
  const input = new Tensor([channels, target[2], target[1], target[0]],
                           padBlock(stacked, channels, dims, target));
  const tape = new Tape();
  const probs = net.forward(tape, input);
  const out = cropBlock(probs.data, meta.classIds.length, target, dims);
  writeSoftMap(outPath, {
    dims, spacing, channels: meta.classIds.length, data: out,
  });
}
