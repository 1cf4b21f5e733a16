#!/usr/bin/env python3
# Copyright (c) 2026 The stylediff Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Fetch pretrained VGG convolution weights and convert them to the
stylediff binary layout.

VGG-16: the ImageNet-trained torchvision VGG-16 convolution stack, as
redistributed inside the lpips-jax source package on PyPI.

VGG-19: convert a torchvision ``vgg19-*.pth`` state dict you already have
(``--vgg19-pth``); requires torch.

Output file layout (little endian):
    magic  b"SDWT", u32 version (=1), u32 tensor count
    per tensor: u32 name length, name bytes, u32 ndim, u32 dims[ndim],
                float32 data (conv weights are out x in x kh x kw)
"""
import argparse
import hashlib
import io
import os
import pickle
import struct
import sys
import tarfile
import urllib.request

import numpy as np

LPIPS_JAX_URL = ("https://files.pythonhosted.org/packages/e4/4f/"
                 "5d98bdde23129144b73bc992f759f04b5fbb0db3df3051114d7d30426e0b/"
                 "lpips_jax-0.1.0.tar.gz")
LPIPS_JAX_SHA256 = "a286e44ce15db862b3b5244d175b0f9abbc13c0e737c8355a7dd69fb62fc693b"

VGG16_NAMES = ["conv1_1", "conv1_2", "conv2_1", "conv2_2", "conv3_1", "conv3_2",
               "conv3_3", "conv4_1", "conv4_2", "conv4_3", "conv5_1", "conv5_2",
               "conv5_3"]
VGG19_NAMES = ["conv1_1", "conv1_2", "conv2_1", "conv2_2", "conv3_1", "conv3_2",
               "conv3_3", "conv3_4", "conv4_1", "conv4_2", "conv4_3", "conv4_4",
               "conv5_1", "conv5_2", "conv5_3", "conv5_4"]


def cache_dir():
    env = os.environ.get("STYLEDIFF_WEIGHTS_DIR")
    if env:
        return env
    xdg = os.environ.get("XDG_CACHE_HOME")
    if xdg:
        return os.path.join(xdg, "stylediff")
    return os.path.join(os.path.expanduser("~"), ".cache", "stylediff")


def write_weights(path, tensors):
    buf = io.BytesIO()
    buf.write(b"SDWT")
    buf.write(struct.pack("<II", 1, len(tensors)))
    for name, arr in tensors:
        arr = np.ascontiguousarray(arr, dtype="<f4")
        raw = name.encode("ascii")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack("<%dI" % arr.ndim, *arr.shape))
        buf.write(arr.tobytes())
    data = buf.getvalue()
    tmp = path + ".part"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)
    return hashlib.sha256(data).hexdigest()


def fetch_vgg16(out_dir):
    print("downloading", LPIPS_JAX_URL, file=sys.stderr)
    with urllib.request.urlopen(LPIPS_JAX_URL) as r:
        blob = r.read()
    digest = hashlib.sha256(blob).hexdigest()
    if digest != LPIPS_JAX_SHA256:
        sys.exit("checksum mismatch for lpips-jax archive: " + digest)
    with tarfile.open(fileobj=io.BytesIO(blob), mode="r:gz") as tar:
        member = tar.getmember("lpips_jax-0.1.0/lpips_jax/weights/vgg16.ckpt")
        params = pickle.load(tar.extractfile(member))
    convs = params["VGG16_0"]
    tensors = []
    for i, name in enumerate(VGG16_NAMES):
        p = convs["Conv_%d" % i]
        # flax kernels are kh x kw x in x out
        tensors.append((name + ".weight", np.transpose(p["kernel"], (3, 2, 0, 1))))
        tensors.append((name + ".bias", p["bias"]))
    return write_weights(os.path.join(out_dir, "vgg16.sdwt"), tensors)


def convert_vgg19(pth, out_dir):
    import torch
    state = torch.load(pth, map_location="cpu")
    conv_idx = [k for k in state if k.startswith("features.") and k.endswith(".weight")]
    conv_idx.sort(key=lambda k: int(k.split(".")[1]))
    if len(conv_idx) != len(VGG19_NAMES):
        sys.exit("not a VGG-19 state dict")
    tensors = []
    for key, name in zip(conv_idx, VGG19_NAMES):
        tensors.append((name + ".weight", state[key].numpy()))
        tensors.append((name + ".bias", state[key.replace(".weight", ".bias")].numpy()))
    return write_weights(os.path.join(out_dir, "vgg19.sdwt"), tensors)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dir", default=cache_dir(), help="weight cache directory")
    ap.add_argument("--vgg19-pth", help="torchvision VGG-19 state dict to convert")
    args = ap.parse_args()
    os.makedirs(args.dir, exist_ok=True)
    if args.vgg19_pth:
        digest = convert_vgg19(args.vgg19_pth, args.dir)
        print("vgg19.sdwt sha256", digest)
    else:
        digest = fetch_vgg16(args.dir)
        print("vgg16.sdwt sha256", digest)


if __name__ == "__main__":
    main()
