/** Differentiable ops for 3D volumes, channels-first [C, D, H, W].
 *
 * conv3d uses 3x3x3 kernels with zero padding and stride 1; rows are
 * processed with a sliding window over two output channels at a time,
 * which is what keeps pure-JS training at toy scale viable.
 */

import { Tape, Tensor } from "./tensor.js";

function shape4(t: Tensor): [number, number, number, number] {
  if (t.shape.length !== 4) throw new Error(`expected 4D tensor, got ${t.shape}`);
  return t.shape as [number, number, number, number];
}

/** Forward 3x3x3 convolution. w: [Co, Ci, 27], b: [Co]. */
function convForward(
  x: Float64Array, ci: number, d: number, h: number, wDim: number,
  w: Float64Array, b: Float64Array, co: number,
): Float64Array {
  const hw = h * wDim;
  const dhw = d * hw;
  const out = new Float64Array(co * dhw);
  for (let o = 0; o < co; o++) {
    const base = o * dhw;
    const bias = b[o];
    for (let p = 0; p < dhw; p++) out[base + p] = bias;
  }
  const oEven = co - (co % 2);
  for (let o = 0; o < oEven; o += 2) {
    convForwardPair(x, ci, d, h, wDim, w, out, o, o + 1, dhw, hw);
  }
  if (co % 2 === 1) {
    convForwardPair(x, ci, d, h, wDim, w, out, co - 1, -1, dhw, hw);
  }
  return out;
}

function convForwardPair(
  x: Float64Array, ci: number, d: number, h: number, wDim: number,
  w: Float64Array, out: Float64Array, o0: number, o1: number,
  dhw: number, hw: number,
): void {
  const pair = o1 >= 0;
  const ob0 = o0 * dhw;
  const ob1 = pair ? o1 * dhw : 0;
  for (let i = 0; i < ci; i++) {
    const ib = i * dhw;
    const wb0 = (o0 * ci + i) * 27;
    const wb1 = pair ? (o1 * ci + i) * 27 : 0;
    for (let kz = 0; kz < 3; kz++) {
      for (let ky = 0; ky < 3; ky++) {
        const t = kz * 9 + ky * 3;
        const a0 = w[wb0 + t];
        const a1 = w[wb0 + t + 1];
        const a2 = w[wb0 + t + 2];
        const b0 = pair ? w[wb1 + t] : 0;
        const b1 = pair ? w[wb1 + t + 1] : 0;
        const b2 = pair ? w[wb1 + t + 2] : 0;
        for (let z = 0; z < d; z++) {
          const sz = z + kz - 1;
          if (sz < 0 || sz >= d) continue;
          for (let y = 0; y < h; y++) {
            const sy = y + ky - 1;
            if (sy < 0 || sy >= h) continue;
            const row = z * hw + y * wDim;
            const po0 = ob0 + row;
            const po1 = ob1 + row;
            const pi = ib + sz * hw + sy * wDim;
            if (wDim === 1) {
              out[po0] += a1 * x[pi];
              if (pair) out[po1] += b1 * x[pi];
              continue;
            }
            let xm = x[pi];
            let xc = x[pi + 1];
            out[po0] += a1 * xm + a2 * xc;
            if (pair) out[po1] += b1 * xm + b2 * xc;
            for (let xx = 1; xx < wDim - 1; xx++) {
              const xp = x[pi + xx + 1];
              out[po0 + xx] += a0 * xm + a1 * xc + a2 * xp;
              if (pair) out[po1 + xx] += b0 * xm + b1 * xc + b2 * xp;
              xm = xc;
              xc = xp;
            }
            out[po0 + wDim - 1] += a0 * xm + a1 * xc;
            if (pair) out[po1 + wDim - 1] += b0 * xm + b1 * xc;
          }
        }
      }
    }
  }
}

/** Gradient w.r.t. the convolution input (correlation with flipped taps). */
function convBackwardInput(
  gout: Float64Array, ci: number, d: number, h: number, wDim: number,
  w: Float64Array, co: number, gin: Float64Array,
): void {
  const hw = h * wDim;
  const dhw = d * hw;
  for (let o = 0; o < co; o++) {
    const ob = o * dhw;
    for (let i = 0; i < ci; i++) {
      const ib = i * dhw;
      const wb = (o * ci + i) * 27;
      for (let kz = 0; kz < 3; kz++) {
        for (let ky = 0; ky < 3; ky++) {
          const t = kz * 9 + ky * 3;
          const a0 = w[wb + t];
          const a1 = w[wb + t + 1];
          const a2 = w[wb + t + 2];
          for (let z = 0; z < d; z++) {
            const sz = z + kz - 1;
            if (sz < 0 || sz >= d) continue;
            for (let y = 0; y < h; y++) {
              const sy = y + ky - 1;
              if (sy < 0 || sy >= h) continue;
              const po = ob + z * hw + y * wDim;
              const pg = ib + sz * hw + sy * wDim;
              if (wDim === 1) {
                gin[pg] += a1 * gout[po];
                continue;
              }
              // gin[xx + kx - 1] += w[kx] * gout[xx]
              let g = gout[po];
              gin[pg] += a1 * g;
              gin[pg + 1] += a2 * g;
              for (let xx = 1; xx < wDim - 1; xx++) {
                g = gout[po + xx];
                gin[pg + xx - 1] += a0 * g;
                gin[pg + xx] += a1 * g;
                gin[pg + xx + 1] += a2 * g;
              }
              g = gout[po + wDim - 1];
              gin[pg + wDim - 2] += a0 * g;
              gin[pg + wDim - 1] += a1 * g;
            }
          }
        }
      }
    }
  }
}

/** Gradient w.r.t. weights and bias. */
function convBackwardParams(
  x: Float64Array, gout: Float64Array, ci: number, d: number, h: number,
  wDim: number, co: number, gw: Float64Array, gb: Float64Array,
): void {
  const hw = h * wDim;
  const dhw = d * hw;
  for (let o = 0; o < co; o++) {
    const ob = o * dhw;
    let bsum = 0;
    for (let p = 0; p < dhw; p++) bsum += gout[ob + p];
    gb[o] += bsum;
    for (let i = 0; i < ci; i++) {
      const ib = i * dhw;
      const wb = (o * ci + i) * 27;
      for (let kz = 0; kz < 3; kz++) {
        for (let ky = 0; ky < 3; ky++) {
          const t = kz * 9 + ky * 3;
          let s0 = 0;
          let s1 = 0;
          let s2 = 0;
          for (let z = 0; z < d; z++) {
            const sz = z + kz - 1;
            if (sz < 0 || sz >= d) continue;
            for (let y = 0; y < h; y++) {
              const sy = y + ky - 1;
              if (sy < 0 || sy >= h) continue;
              const po = ob + z * hw + y * wDim;
              const pi = ib + sz * hw + sy * wDim;
              if (wDim === 1) {
                s1 += gout[po] * x[pi];
                continue;
              }
              let xm = x[pi];
              let xc = x[pi + 1];
              let g = gout[po];
              s1 += g * xm;
              s2 += g * xc;
              for (let xx = 1; xx < wDim - 1; xx++) {
                const xp = x[pi + xx + 1];
                g = gout[po + xx];
                s0 += g * xm;
                s1 += g * xc;
                s2 += g * xp;
                xm = xc;
                xc = xp;
              }
              g = gout[po + wDim - 1];
              s0 += g * xm;
              s1 += g * xc;
            }
          }
          gw[wb + t] += s0;
          gw[wb + t + 1] += s1;
          gw[wb + t + 2] += s2;
        }
      }
    }
  }
}

export function conv3d(tape: Tape, x: Tensor, w: Tensor, b: Tensor): Tensor {
  const [ci, d, h, wd] = shape4(x);
  const [co, ciW, k] = w.shape;
  if (ciW !== ci || k !== 27) {
    throw new Error(`weight shape ${w.shape} mismatches input channels ${ci}`);
  }
  const out = new Tensor([co, d, h, wd],
                         convForward(x.data, ci, d, h, wd, w.data, b.data, co));
  tape.record(out, [x, w, b], () => {
    const gout = out.gradArray();
    if (x.requiresGrad) {
      convBackwardInput(gout, ci, d, h, wd, w.data, co, x.gradArray());
    }
    convBackwardParams(x.data, gout, ci, d, h, wd, co,
                       w.gradArray(), b.gradArray());
  });
  return out;
}

export function maxPool2(tape: Tape, x: Tensor): Tensor {
  const [c, d, h, w] = shape4(x);
  if (d % 2 || h % 2 || w % 2) {
    throw new Error(`max pooling needs even dims, got ${x.shape}`);
  }
  const od = d / 2;
  const oh = h / 2;
  const ow = w / 2;
  const out = new Tensor([c, od, oh, ow]);
  const arg = new Int32Array(out.size);
  const hw = h * w;
  const dhw = d * hw;
  let p = 0;
  for (let cc = 0; cc < c; cc++) {
    const cb = cc * dhw;
    for (let z = 0; z < od; z++) {
      for (let y = 0; y < oh; y++) {
        for (let xx = 0; xx < ow; xx++) {
          let best = -Infinity;
          let bestIdx = -1;
          for (let dz = 0; dz < 2; dz++) {
            for (let dy = 0; dy < 2; dy++) {
              const rb = cb + (2 * z + dz) * hw + (2 * y + dy) * w + 2 * xx;
              for (let dx = 0; dx < 2; dx++) {
                const v = x.data[rb + dx];
                if (v > best) {
                  best = v;
                  bestIdx = rb + dx;
                }
              }
            }
          }
          out.data[p] = best;
          arg[p] = bestIdx;
          p++;
        }
      }
    }
  }
  tape.record(out, [x], () => {
    const gout = out.gradArray();
    const gin = x.gradArray();
    for (let q = 0; q < gout.length; q++) gin[arg[q]] += gout[q];
  });
  return out;
}

export function upsample2(tape: Tape, x: Tensor): Tensor {
  const [c, d, h, w] = shape4(x);
  const od = 2 * d;
  const oh = 2 * h;
  const ow = 2 * w;
  const out = new Tensor([c, od, oh, ow]);
  const ihw = h * w;
  const idhw = d * ihw;
  const ohw = oh * ow;
  const odhw = od * ohw;
  for (let cc = 0; cc < c; cc++) {
    for (let z = 0; z < od; z++) {
      const sz = z >> 1;
      for (let y = 0; y < oh; y++) {
        const sy = y >> 1;
        const ob = cc * odhw + z * ohw + y * ow;
        const ib = cc * idhw + sz * ihw + sy * w;
        for (let xx = 0; xx < ow; xx++) {
          out.data[ob + xx] = x.data[ib + (xx >> 1)];
        }
      }
    }
  }
  tape.record(out, [x], () => {
    const gout = out.gradArray();
    const gin = x.gradArray();
    for (let cc = 0; cc < c; cc++) {
      for (let z = 0; z < od; z++) {
        const sz = z >> 1;
        for (let y = 0; y < oh; y++) {
          const sy = y >> 1;
          const ob = cc * odhw + z * ohw + y * ow;
          const ib = cc * idhw + sz * ihw + sy * w;
          for (let xx = 0; xx < ow; xx++) {
            gin[ib + (xx >> 1)] += gout[ob + xx];
          }
        }
      }
    }
  });
  return out;
}

export function concatChannels(tape: Tape, a: Tensor, b: Tensor): Tensor {
  const [ca, d, h, w] = shape4(a);
  const [cb, d2, h2, w2] = shape4(b);
  if (d !== d2 || h !== h2 || w !== w2) {
    throw new Error(`concat spatial mismatch: ${a.shape} vs ${b.shape}`);
  }
  const out = new Tensor([ca + cb, d, h, w]);
  out.data.set(a.data, 0);
  out.data.set(b.data, a.size);
  tape.record(out, [a, b], () => {
    const gout = out.gradArray();
    if (a.requiresGrad) {
      const ga = a.gradArray();
      for (let i = 0; i < a.size; i++) ga[i] += gout[i];
    }
    if (b.requiresGrad) {
      const gb = b.gradArray();
      for (let i = 0; i < b.size; i++) gb[i] += gout[a.size + i];
    }
  });
  return out;
}

export function elu(tape: Tape, x: Tensor): Tensor {
  const out = new Tensor(x.shape);
  for (let i = 0; i < x.size; i++) {
    const v = x.data[i];
    out.data[i] = v > 0 ? v : Math.exp(v) - 1.0;
  }
  tape.record(out, [x], () => {
    const gout = out.gradArray();
    const gin = x.gradArray();
    for (let i = 0; i < x.size; i++) {
      gin[i] += gout[i] * (x.data[i] > 0 ? 1.0 : out.data[i] + 1.0);
    }
  });
  return out;
}

/** Per-voxel softmax over the channel axis. */
export function softmaxChannels(tape: Tape, x: Tensor): Tensor {
  const [c, d, h, w] = shape4(x);
  const vox = d * h * w;
  const out = new Tensor(x.shape);
  for (let p = 0; p < vox; p++) {
    let maxv = -Infinity;
    for (let cc = 0; cc < c; cc++) {
      const v = x.data[cc * vox + p];
      if (v > maxv) maxv = v;
    }
    let total = 0;
    for (let cc = 0; cc < c; cc++) {
      const e = Math.exp(x.data[cc * vox + p] - maxv);
      out.data[cc * vox + p] = e;
      total += e;
    }
    for (let cc = 0; cc < c; cc++) out.data[cc * vox + p] /= total;
  }
  tape.record(out, [x], () => {
    const gout = out.gradArray();
    const gin = x.gradArray();
    for (let p = 0; p < vox; p++) {
      let dot = 0;
      for (let cc = 0; cc < c; cc++) {
        dot += gout[cc * vox + p] * out.data[cc * vox + p];
      }
      for (let cc = 0; cc < c; cc++) {
        const idx = cc * vox + p;
        gin[idx] += out.data[idx] * (gout[idx] - dot);
      }
    }
  });
  return out;
}

export const DICE_EPS = 1e-6;

/** Channel-mean soft Dice between probabilities and a one-hot target. */
export function softDice(p: Tensor, target: Float64Array): number {
  const [c] = shape4(p);
  const vox = p.size / c;
  let mean = 0;
  for (let cc = 0; cc < c; cc++) {
    let num = 0;
    let dp = 0;
    let dq = 0;
    const base = cc * vox;
    for (let i = 0; i < vox; i++) {
      const pv = p.data[base + i];
      const qv = target[base + i];
      num += pv * qv;
      dp += pv * pv;
      dq += qv * qv;
    }
    mean += (2 * num + DICE_EPS) / (dp + dq + DICE_EPS);
  }
  return mean / c;
}

/** Loss = 1 - mean soft Dice; differentiable in p. */
export function softDiceLoss(tape: Tape, p: Tensor, target: Float64Array): Tensor {
  const [c] = shape4(p);
  if (target.length !== p.size) {
    throw new Error(`target length ${target.length} != prediction ${p.size}`);
  }
  const vox = p.size / c;
  const nums = new Float64Array(c);
  const dens = new Float64Array(c);
  let mean = 0;
  for (let cc = 0; cc < c; cc++) {
    let num = 0;
    let dp = 0;
    let dq = 0;
    const base = cc * vox;
    for (let i = 0; i < vox; i++) {
      const pv = p.data[base + i];
      const qv = target[base + i];
      num += pv * qv;
      dp += pv * pv;
      dq += qv * qv;
    }
    nums[cc] = 2 * num + DICE_EPS;
    dens[cc] = dp + dq + DICE_EPS;
    mean += nums[cc] / dens[cc];
  }
  const out = new Tensor([1], new Float64Array([1 - mean / c]));
  tape.record(out, [p], () => {
    const g = out.gradArray()[0];
    const gin = p.gradArray();
    for (let cc = 0; cc < c; cc++) {
      const base = cc * vox;
      const den = dens[cc];
      const num = nums[cc];
      const scale = -g / c;
      for (let i = 0; i < vox; i++) {
        const pv = p.data[base + i];
        const qv = target[base + i];
        // d(num/den)/dp = (2 q den - num 2 p) / den^2
        gin[base + i] += scale * (2 * qv * den - 2 * pv * num) / (den * den);
      }
    }
  });
  return out;
}
