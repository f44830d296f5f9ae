import { execFileSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { afterAll, describe, expect, it } from "vitest";

import { readSoftMap, readVolume, writeSoftMap, writeVolume } from "../src/nifti.js";

const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "trainer-nifti-"));
afterAll(() => fs.rmSync(tmp, { recursive: true, force: true }));

describe("nifti round trips", () => {
  it("3D float volume", () => {
    const dims: [number, number, number] = [5, 6, 7];
    const data = new Float64Array(5 * 6 * 7);
    for (let i = 0; i < data.length; i++) data[i] = Math.fround(Math.sin(i));
    const p = path.join(tmp, "vol.nii.gz");
    writeVolume(p, { dims, spacing: [1, 1.5, 2], data, isInteger: false });
    const back = readVolume(p);
    expect(back.dims).toEqual(dims);
    expect(back.spacing[1]).toBeCloseTo(1.5, 5);
    for (let i = 0; i < data.length; i++) {
      expect(back.data[i]).toBe(data[i]);
    }
  });

  it("3D integer labels", () => {
    const dims: [number, number, number] = [4, 4, 4];
    const data = new Float64Array(64);
    for (let i = 0; i < 64; i++) data[i] = i % 5;
    const p = path.join(tmp, "lab.nii.gz");
    writeVolume(p, { dims, spacing: [1, 1, 1], data, isInteger: true }, true);
    const back = readVolume(p);
    expect(back.isInteger).toBe(true);
    expect([...back.data]).toEqual([...data]);
  });

  it("4D soft map", () => {
    const dims: [number, number, number] = [4, 3, 2];
    const vox = 24;
    const data = new Float64Array(3 * vox);
    for (let p2 = 0; p2 < vox; p2++) {
      const a = (p2 % 3) / 3 + 0.1;
      data[p2] = a;
      data[vox + p2] = (1 - a) / 2;
      data[2 * vox + p2] = (1 - a) / 2;
    }
    const p = path.join(tmp, "soft.nii.gz");
    writeSoftMap(p, { dims, spacing: [1, 1, 1], channels: 3, data });
    const back = readSoftMap(p);
    expect(back.channels).toBe(3);
    for (let i = 0; i < data.length; i++) {
      expect(Math.abs(back.data[i] - data[i])).toBeLessThan(1e-6);
    }
  });

  it("rejects truncated files", () => {
    const p = path.join(tmp, "short.nii");
    fs.writeFileSync(p, Buffer.alloc(64));
    expect(() => readVolume(p)).toThrow(/truncated/);
  });
});

describe("interop with the synthbrain package", () => {
  it("volumes written here load identically through the python reader", () => {
    const dims: [number, number, number] = [6, 5, 4];
    const data = new Float64Array(120);
    for (let i = 0; i < 120; i++) data[i] = Math.fround(i * 0.25 - 7);
    const p = path.join(tmp, "interop.nii.gz");
    writeVolume(p, { dims, spacing: [1, 2, 3], data, isInteger: false });
    const script = [
      "import sys, numpy as np",
      "from synthbrain import read_nifti",
      "vol = read_nifti(sys.argv[1])",
      "assert vol.dims == (6, 5, 4), vol.dims",
      "assert vol.spacing == (1.0, 2.0, 3.0), vol.spacing",
      "flat = np.asarray(vol.data).reshape(-1, order='F')",
      "expected = np.float32(np.arange(120) * 0.25 - 7)",
      "assert np.array_equal(flat.astype(np.float32), expected)",
      "print('OK')",
    ].join("\n");
    const out = execFileSync("python3", ["-c", script, p], { encoding: "utf-8" });
    expect(out.trim()).toBe("OK");
  });
});
