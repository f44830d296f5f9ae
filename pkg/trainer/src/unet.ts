/** 3D UNet variants.
 *
 * Segmenter: 5 levels of 2 convolutions, 3x3x3 kernels, ELU everywhere
 * except the terminal softmax; 24 features at the first level, doubled
 * after each max-pooling and halved after each upsampling.
 *
 * Denoiser: one convolution per level with a constant 16 features, and
 * the skip connections between the two top (shallowest) levels removed,
 * trading error propagation against bottleneck smoothness.
 */

import { conv3d, concatChannels, elu, maxPool2, softmaxChannels, upsample2 } from "./ops.js";
import { makeGauss, makeRng, param, Tape, Tensor } from "./tensor.js";

export interface NetConfig {
  kind: "segmenter" | "denoiser";
  levels: number;
  convsPerLevel: number;
  baseFeatures: number;
  inChannels: number;
  outChannels: number;
  /** number of shallow levels whose skip connections are removed */
  skipDropLevels: number;
}

export function segmenterConfig(inChannels: number, outChannels: number): NetConfig {
  return {
    kind: "segmenter",
    levels: 5,
    convsPerLevel: 2,
    baseFeatures: 24,
    inChannels,
    outChannels,
    skipDropLevels: 0,
  };
}

export function denoiserConfig(channels: number): NetConfig {
  return {
    kind: "denoiser",
    levels: 5,
    convsPerLevel: 1,
    baseFeatures: 16,
    inChannels: channels,
    outChannels: channels,
    skipDropLevels: 2,
  };
}

export function featuresAt(config: NetConfig, level: number): number {
  if (config.kind === "denoiser") return config.baseFeatures;
  return config.baseFeatures * 2 ** level;
}

export interface ConvLayer {
  w: Tensor;
  b: Tensor;
}

export class UNet3D {
  config: NetConfig;
  encoder: ConvLayer[][] = [];
  decoder: ConvLayer[][] = [];
  final!: ConvLayer;

  constructor(config: NetConfig, seed = 0) {
    this.config = config;
    const gauss = makeGauss(makeRng(seed + 1));
    const mk = (ci: number, co: number): ConvLayer => {
      const std = Math.sqrt(2.0 / (ci * 27));
      const w = new Float64Array(co * ci * 27);
      for (let i = 0; i < w.length; i++) w[i] = std * gauss();
      return { w: param([co, ci, 27], w), b: param([co]) };
    };

    let channels = config.inChannels;
    for (let level = 0; level < config.levels; level++) {
      const feats = featuresAt(config, level);
      const layers: ConvLayer[] = [];
      for (let c = 0; c < config.convsPerLevel; c++) {
        layers.push(mk(c === 0 ? channels : feats, feats));
      }
      this.encoder.push(layers);
      channels = feats;
    }
    for (let level = config.levels - 2; level >= 0; level--) {
      const feats = featuresAt(config, level);
      const up = featuresAt(config, level + 1);
      const hasSkip = level >= config.skipDropLevels;
      const layers: ConvLayer[] = [];
      for (let c = 0; c < config.convsPerLevel; c++) {
        const cin = c === 0 ? up + (hasSkip ? feats : 0) : feats;
        layers.push(mk(cin, feats));
      }
      this.decoder.push(layers);
    }
    this.final = mk(featuresAt(config, 0), config.outChannels);
  }

  params(): Tensor[] {
    const out: Tensor[] = [];
    for (const layers of [...this.encoder, ...this.decoder, [this.final]]) {
      for (const layer of layers) out.push(layer.w, layer.b);
    }
    return out;
  }

  /** Probabilities [outChannels, D, H, W]; dims must divide 2^(levels-1). */
  forward(tape: Tape, x: Tensor): Tensor {
    const div = 2 ** (this.config.levels - 1);
    const [, d, h, w] = x.shape;
    if (d % div || h % div || w % div) {
      throw new Error(`input dims ${x.shape} must be divisible by ${div}`);
    }
    const skips: Tensor[] = [];
    let cur = x;
    for (let level = 0; level < this.config.levels; level++) {
      for (const layer of this.encoder[level]) {
        cur = elu(tape, conv3d(tape, cur, layer.w, layer.b));
      }
      if (level < this.config.levels - 1) {
        skips.push(cur);
        cur = maxPool2(tape, cur);
      }
    }
    for (let di = 0; di < this.decoder.length; di++) {
      const level = this.config.levels - 2 - di;
      cur = upsample2(tape, cur);
      if (level >= this.config.skipDropLevels) {
        cur = concatChannels(tape, cur, skips[level]);
      }
      for (const layer of this.decoder[di]) {
        cur = elu(tape, conv3d(tape, cur, layer.w, layer.b));
      }
    }
    const logits = conv3d(tape, cur, this.final.w, this.final.b);
    return softmaxChannels(tape, logits);
  }
}
