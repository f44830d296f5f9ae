/** Dataset access for directories produced by `synthbrain generate`.
 *
 * Per index i the generator writes `<i>_image.nii.gz`, `<i>_target.nii.gz`
 * and (role s2) `<i>_cond.nii.gz`. Denoiser training additionally expects
 * `<i>_tissues.nii.gz`: the tissue-grouped targets, produced with the
 * `synthbrain group` subcommand.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { readSoftMap, readVolume } from "./nifti.js";

export type Role = "s1" | "s2" | "d";

export interface Sample {
  input: Float64Array;       // channels-first
  inChannels: number;
  dims: [number, number, number];
  spacing: [number, number, number];
  targetLabels: Float64Array; // integer label values per voxel
}

export function listIndices(dir: string): number[] {
  const indices: number[] = [];
  for (const name of fs.readdirSync(dir)) {
    const m = /^(\d+)_image\.nii(\.gz)?$/.exec(name);
    if (m) indices.push(parseInt(m[1], 10));
  }
  indices.sort((a, b) => a - b);
  return indices;
}

function pairPath(dir: string, index: number, suffix: string): string {
  for (const ext of [".nii.gz", ".nii"]) {
    const p = path.join(dir, `${index}_${suffix}${ext}`);
    if (fs.existsSync(p)) return p;
  }
  throw new Error(`missing ${index}_${suffix}.nii[.gz] in ${dir}`);
}

export function loadSample(dir: string, index: number, role: Role): Sample {
  if (role === "d") {
    const cond = readSoftMap(pairPath(dir, index, "cond"));
    const tissues = readVolume(pairPath(dir, index, "tissues"));
    return {
      input: cond.data,
      inChannels: cond.channels,
      dims: cond.dims,
      spacing: cond.spacing,
      targetLabels: tissues.data,
    };
  }
  const image = readVolume(pairPath(dir, index, "image"));
  const target = readVolume(pairPath(dir, index, "target"));
  if (role === "s1") {
    return {
      input: image.data,
      inChannels: 1,
      dims: image.dims,
      spacing: image.spacing,
      targetLabels: target.data,
    };
  }
  const cond = readSoftMap(pairPath(dir, index, "cond"));
  const vox = image.data.length;
  const input = new Float64Array((1 + cond.channels) * vox);
  input.set(image.data, 0);
  input.set(cond.data, vox);
  return {
    input,
    inChannels: 1 + cond.channels,
    dims: image.dims,
    spacing: image.spacing,
    targetLabels: target.data,
  };
}

export function distinctLabels(samples: Sample[]): number[] {
  const seen = new Set<number>();
  for (const s of samples) {
    for (const v of s.targetLabels) seen.add(v);
  }
  return [...seen].sort((a, b) => a - b);
}

/** One-hot encode labels over classIds; labels outside map to channel 0. */
export function oneHot(labels: Float64Array, classIds: number[]): Float64Array {
  const vox = labels.length;
  const out = new Float64Array(classIds.length * vox);
  const index = new Map<number, number>();
  classIds.forEach((v, i) => index.set(v, i));
  for (let p = 0; p < vox; p++) {
    const c = index.get(labels[p]) ?? 0;
    out[c * vox + p] = 1.0;
  }
  return out;
}

/** Center-crop a channels-first block to cube side `crop` (0 = no crop). */
export function centerCrop(
  data: Float64Array, channels: number, dims: [number, number, number],
  crop: number,
): { data: Float64Array; dims: [number, number, number] } {
  if (crop <= 0 || (dims[0] === crop && dims[1] === crop && dims[2] === crop)) {
    return { data, dims };
  }
  const [d1, d2, d3] = dims;
  if (crop > d1 || crop > d2 || crop > d3) {
    throw new Error(`crop ${crop} exceeds dims ${dims}`);
  }
  const o1 = (d1 - crop) >> 1;
  const o2 = (d2 - crop) >> 1;
  const o3 = (d3 - crop) >> 1;
  const out = new Float64Array(channels * crop * crop * crop);
  const vox = d1 * d2 * d3;
  let q = 0;
  for (let c = 0; c < channels; c++) {
    const cb = c * vox;
    for (let k = 0; k < crop; k++) {
      for (let j = 0; j < crop; j++) {
        const rb = cb + (k + o3) * d1 * d2 + (j + o2) * d1 + o1;
        for (let i = 0; i < crop; i++) out[q++] = data[rb + i];
      }
    }
  }
  return { data: out, dims: [crop, crop, crop] };
}
