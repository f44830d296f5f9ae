import { describe, expect, it } from "vitest";

import {
  concatChannels, conv3d, elu, maxPool2, softDice, softDiceLoss,
  softmaxChannels, upsample2,
} from "../src/ops.js";
import { makeGauss, makeRng, param, Tape, Tensor } from "../src/tensor.js";
import { analyticGradient, maxRelativeError, numericGradient } from "./gradcheck.js";

function randomTensor(shape: number[], seed: number): Tensor {
  const gauss = makeGauss(makeRng(seed));
  const t = new Tensor(shape);
  for (let i = 0; i < t.size; i++) t.data[i] = gauss();
  return t;
}

function scalarSum(tape: Tape, t: Tensor): Tensor {
  // weighted sum so every element has a distinct gradient path
  const weights = new Float64Array(t.size);
  for (let i = 0; i < t.size; i++) weights[i] = Math.sin(i + 1);
  const out = new Tensor([1]);
  let acc = 0;
  for (let i = 0; i < t.size; i++) acc += weights[i] * t.data[i];
  out.data[0] = acc;
  tape.record(out, [t], () => {
    const g = out.gradArray()[0];
    const gin = t.gradArray();
    for (let i = 0; i < t.size; i++) gin[i] += g * weights[i];
  });
  return out;
}

describe("conv3d", () => {
  it("matches a brute-force reference", () => {
    const x = randomTensor([2, 3, 4, 5], 1);
    const w = param([3, 2, 27], randomTensor([3, 2, 27], 2).data);
    const b = param([3], new Float64Array([0.1, -0.2, 0.3]));
    const out = conv3d(new Tape(), x, w, b);
    const [ci, d, h, wd] = [2, 3, 4, 5];
    for (const [o, z, y, xx] of [[0, 0, 0, 0], [1, 1, 2, 3], [2, 2, 3, 4], [1, 1, 1, 1]]) {
      let want = b.data[o];
      for (let i = 0; i < ci; i++) {
        for (let kz = 0; kz < 3; kz++) {
          for (let ky = 0; ky < 3; ky++) {
            for (let kx = 0; kx < 3; kx++) {
              const sz = z + kz - 1;
              const sy = y + ky - 1;
              const sx = xx + kx - 1;
              if (sz < 0 || sz >= d || sy < 0 || sy >= h || sx < 0 || sx >= wd) continue;
              want += w.data[(o * ci + i) * 27 + kz * 9 + ky * 3 + kx]
                * x.data[((i * d + sz) * h + sy) * wd + sx];
            }
          }
        }
      }
      const got = out.data[((o * d + z) * h + y) * wd + xx];
      expect(Math.abs(got - want)).toBeLessThan(1e-12);
    }
  });

  it("input gradient passes a numeric check", () => {
    const w = param([2, 2, 27], randomTensor([2, 2, 27], 3).data);
    const b = param([2]);
    const x = randomTensor([2, 3, 3, 4], 4);
    const analytic = analyticGradient(
      (tape, t) => scalarSum(tape, conv3d(tape, t, w, b)), x);
    const numeric = numericGradient((t) => {
      const out = conv3d(new Tape(), t, w, b);
      let acc = 0;
      for (let i = 0; i < out.size; i++) acc += Math.sin(i + 1) * out.data[i];
      return acc;
    }, x);
    expect(maxRelativeError(analytic, numeric)).toBeLessThan(1e-6);
  });

  it("weight and bias gradients pass a numeric check", () => {
    const x = randomTensor([2, 3, 3, 4], 5);
    x.requiresGrad = false;
    const wInit = randomTensor([2, 2, 27], 6).data;
    const check = (target: "w" | "b") => {
      const w = param([2, 2, 27], wInit.slice());
      const b = param([2], new Float64Array([0.05, -0.1]));
      const probe = target === "w" ? w : b;
      const tape = new Tape();
      const loss = scalarSum(tape, conv3d(tape, x, w, b));
      tape.backward(loss);
      const analytic = probe.gradArray().slice();
      const numeric = numericGradient((t) => {
        const w2 = param([2, 2, 27], target === "w" ? t.data : wInit.slice());
        const b2 = param([2], target === "b" ? t.data : new Float64Array([0.05, -0.1]));
        const out = conv3d(new Tape(), x, w2, b2);
        let acc = 0;
        for (let i = 0; i < out.size; i++) acc += Math.sin(i + 1) * out.data[i];
        return acc;
      }, probe);
      expect(maxRelativeError(analytic, numeric)).toBeLessThan(1e-6);
    };
    check("w");
    check("b");
  });
});

describe("conv3d degenerate dims", () => {
  it("handles 1-voxel-wide rows (deepest UNet level)", () => {
    const x = randomTensor([3, 1, 1, 1], 20);
    const w = param([2, 3, 27], randomTensor([2, 3, 27], 21).data);
    const b = param([2], new Float64Array([0.1, 0.2]));
    const out = conv3d(new Tape(), x, w, b);
    for (const o of [0, 1]) {
      let want = b.data[o];
      for (let i = 0; i < 3; i++) {
        want += w.data[(o * 3 + i) * 27 + 13] * x.data[i]; // center tap only
      }
      expect(Math.abs(out.data[o] - want)).toBeLessThan(1e-12);
    }
    const analytic = analyticGradient(
      (tape, t) => scalarSum(tape, conv3d(tape, t, w, b)), x);
    const numeric = numericGradient((t) => {
      const o = conv3d(new Tape(), t, w, b);
      let acc = 0;
      for (let i = 0; i < o.size; i++) acc += Math.sin(i + 1) * o.data[i];
      return acc;
    }, x);
    expect(maxRelativeError(analytic, numeric)).toBeLessThan(1e-6);
  });
});

describe("pooling and upsampling", () => {
  it("maxPool2 forward/backward", () => {
    const x = randomTensor([1, 2, 2, 4], 7);
    const out = maxPool2(new Tape(), x);
    expect(out.shape).toEqual([1, 1, 1, 2]);
    const analytic = analyticGradient((tape, t) => scalarSum(tape, maxPool2(tape, t)), x);
    const numeric = numericGradient((t) => {
      const o = maxPool2(new Tape(), t);
      let acc = 0;
      for (let i = 0; i < o.size; i++) acc += Math.sin(i + 1) * o.data[i];
      return acc;
    }, x);
    expect(maxRelativeError(analytic, numeric)).toBeLessThan(1e-6);
  });

  it("upsample2 is exact nearest-neighbour and backward sums children", () => {
    const x = randomTensor([2, 1, 2, 2], 8);
    const out = upsample2(new Tape(), x);
    expect(out.shape).toEqual([2, 2, 4, 4]);
    expect(out.data[0]).toBe(x.data[0]);
    const analytic = analyticGradient((tape, t) => scalarSum(tape, upsample2(tape, t)), x);
    const numeric = numericGradient((t) => {
      const o = upsample2(new Tape(), t);
      let acc = 0;
      for (let i = 0; i < o.size; i++) acc += Math.sin(i + 1) * o.data[i];
      return acc;
    }, x);
    expect(maxRelativeError(analytic, numeric)).toBeLessThan(1e-6);
  });
});

describe("pointwise ops", () => {
  it("elu gradient", () => {
    const x = randomTensor([1, 2, 2, 3], 9);
    const analytic = analyticGradient((tape, t) => scalarSum(tape, elu(tape, t)), x);
    const numeric = numericGradient((t) => {
      const o = elu(new Tape(), t);
      let acc = 0;
      for (let i = 0; i < o.size; i++) acc += Math.sin(i + 1) * o.data[i];
      return acc;
    }, x);
    expect(maxRelativeError(analytic, numeric)).toBeLessThan(1e-5);
  });

  it("softmax sums to one and gradient checks", () => {
    const x = randomTensor([3, 2, 2, 2], 10);
    const p = softmaxChannels(new Tape(), x);
    const vox = 8;
    for (let v = 0; v < vox; v++) {
      let total = 0;
      for (let c = 0; c < 3; c++) total += p.data[c * vox + v];
      expect(Math.abs(total - 1)).toBeLessThan(1e-12);
    }
    const analytic = analyticGradient(
      (tape, t) => scalarSum(tape, softmaxChannels(tape, t)), x);
    const numeric = numericGradient((t) => {
      const o = softmaxChannels(new Tape(), t);
      let acc = 0;
      for (let i = 0; i < o.size; i++) acc += Math.sin(i + 1) * o.data[i];
      return acc;
    }, x);
    expect(maxRelativeError(analytic, numeric)).toBeLessThan(1e-5);
  });

  it("concat splits gradients", () => {
    const a = randomTensor([1, 2, 2, 2], 11);
    const b = randomTensor([2, 2, 2, 2], 12);
    b.requiresGrad = true;
    const analytic = analyticGradient(
      (tape, t) => scalarSum(tape, concatChannels(tape, t, b)), a);
    const numeric = numericGradient((t) => {
      const o = concatChannels(new Tape(), t, b);
      let acc = 0;
      for (let i = 0; i < o.size; i++) acc += Math.sin(i + 1) * o.data[i];
      return acc;
    }, a);
    expect(maxRelativeError(analytic, numeric)).toBeLessThan(1e-6);
  });
});

describe("soft dice", () => {
  it("is 1 for a perfect one-hot match", () => {
    const vox = 8;
    const p = new Tensor([2, 2, 2, 2]);
    const target = new Float64Array(2 * vox);
    for (let v = 0; v < vox; v++) {
      const c = v % 2;
      p.data[c * vox + v] = 1;
      target[c * vox + v] = 1;
    }
    expect(softDice(p, target)).toBeCloseTo(1.0, 5);
    const loss = softDiceLoss(new Tape(), p, target);
    expect(loss.data[0]).toBeCloseTo(0.0, 5);
  });
});
