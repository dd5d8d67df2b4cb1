#!/usr/bin/env python3
# Copyright 2026 The PSAL Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS-IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Regenerates the frame-pair fixtures under tests/fixtures.

frame_b.png is the 512x512 astronaut test image shipped with scikit-image.
frame_a.png simulates a later frame of the same sequence: a global camera
shift, an independently moving foreground block and mild sensor noise.
toy_target.png and toy_reference.png are 16x box-filtered 32x32 versions of
the pair, sized for the colorization trainer.
"""
import pathlib

import numpy as np
from PIL import Image
from skimage import data

OUT = pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def shift(img, dy, dx):
    h, w = img.shape[:2]
    ys = np.clip(np.arange(h) - dy, 0, h - 1)
    xs = np.clip(np.arange(w) - dx, 0, w - 1)
    return img[ys][:, xs]


def box_downsample(img, factor):
    h, w, c = img.shape
    return img.reshape(h // factor, factor, w // factor, factor, c).mean(axis=(1, 3))


def save(img, name):
    Image.fromarray(np.round(img * 255).astype(np.uint8)).save(OUT / name)


def main():
    rng = np.random.default_rng(20210601)
    b = data.astronaut().astype(np.float64) / 255.0
    a = shift(b, 3, 6)
    moved = shift(b, -8, 5)
    a[300:420, 180:300] = moved[300:420, 180:300]
    a = np.clip(a + rng.normal(0.0, 0.01, a.shape), 0.0, 1.0)
    OUT.mkdir(parents=True, exist_ok=True)
    save(a, "frame_a.png")
    save(b, "frame_b.png")
    save(box_downsample(a, 16), "toy_target.png")
    save(box_downsample(b, 16), "toy_reference.png")


if __name__ == "__main__":
    main()
