#!/usr/bin/env python3
"""Regenerate the backbone layer manifests under data/manifests/.

Walks the torchvision ResNet-50 and MobileNetV2 definitions (classification
heads removed, 256x128 input) and writes one manifest line per layer:

    name,op_kind,param_count[,K,M,N,stride,out_h,out_w]

BatchNorm layers count gamma, beta, running_mean and running_var.
"""

import argparse
import pathlib

import torch
import torchvision


def resnet50_reid():
    net = torchvision.models.resnet50()
    net.fc = torch.nn.Identity()
    # last stride 1, so a 256x128 input leaves a 16x8 map for the (16, 8) pool
    net.layer4[0].conv2.stride = (1, 1)
    net.layer4[0].downsample[0].stride = (1, 1)
    net.avgpool = torch.nn.AvgPool2d((16, 8))
    return net


def mobilenetv2_reid():
    net = torchvision.models.mobilenet_v2()
    net.classifier = torch.nn.Identity()
    return net


def conv_kind(conv, pointwise_label):
    if conv.groups == conv.in_channels and conv.groups > 1:
        return "DepthwiseConv"
    if conv.kernel_size == (1, 1):
        return pointwise_label
    return "Conv"


def collect(net, pointwise_label, residual_types):
    rows = []
    seen = {}

    def unique(name):
        seen[name] = seen.get(name, 0) + 1
        return name if seen[name] == 1 else f"{name}.{seen[name] - 1}"

    def hook_for(name, module):
        def hook(_mod, _inp, out):
            if isinstance(module, torch.nn.Conv2d):
                k = module.kernel_size[0]
                params = sum(p.numel() for p in module.parameters())
                rows.append([unique(name), conv_kind(module, pointwise_label), params,
                             k, module.in_channels, module.out_channels,
                             module.stride[0], out.shape[2], out.shape[3]])
            elif isinstance(module, torch.nn.BatchNorm2d):
                rows.append([unique(name), "BatchNorm", 4 * module.num_features])
            elif isinstance(module, (torch.nn.ReLU, torch.nn.ReLU6)):
                rows.append([unique(name), "ReLU", 0])
            elif isinstance(module, (torch.nn.AvgPool2d, torch.nn.AdaptiveAvgPool2d)):
                rows.append([unique(name), "AvgPool", 0])
            elif isinstance(module, residual_types):
                if getattr(module, "use_res_connect", True):
                    rows.append([unique(name + ".add"), "ResidualAdd", 0])
        return hook

    for name, module in net.named_modules():
        module.register_forward_hook(hook_for(name, module))
    net.eval()
    with torch.no_grad():
        net(torch.zeros(1, 3, 256, 128))
    if not any(r[1] == "AvgPool" for r in rows):
        # MobileNetV2 pools functionally in forward(); record the (8, 4) pool explicitly
        rows.append(["avgpool", "AvgPool", 0])
    rows.append(["loss", "Loss", 0])
    return rows


def write(path, rows, title):
    with open(path, "w") as f:
        f.write(f"# {title}\n")
        f.write("# name,op_kind,param_count[,K,M,N,stride,out_h,out_w]\n")
        for row in rows:
            f.write(",".join(str(v) for v in row) + "\n")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data" / "manifests"))
    args = parser.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    from torchvision.models.resnet import Bottleneck
    from torchvision.models.mobilenetv2 import InvertedResidual

    write(out / "resnet50_reid.csv", collect(resnet50_reid(), "Conv", Bottleneck),
          "ResNet-50 embedding backbone, fc removed, last stride 1, 256x128 input")
    write(out / "mobilenetv2_reid.csv", collect(mobilenetv2_reid(), "PointwiseConv", InvertedResidual),
          "MobileNetV2 embedding backbone, classifier removed, 256x128 input")


if __name__ == "__main__":
    main()
