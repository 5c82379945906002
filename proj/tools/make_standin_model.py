#!/usr/bin/env python3
"""Write a ResNet-50 inference graph with five tapped block outputs.

Weights come from torchvision's pretrained ImageNet checkpoint when it is
available locally (or downloadable); otherwise the architecture is exported
with seeded default initialization so the C++ pipeline has a model with the
exact tap layout to run against. The provenance is recorded in the sidecar.
"""
import argparse
import json
import sys

import torch
import torchvision


class Tapped(torch.nn.Module):
    def __init__(self, net):
        super().__init__()
        self.net = net

    def forward(self, x):
        n = self.net
        b1 = n.relu(n.bn1(n.conv1(x)))
        b2 = n.layer1(n.maxpool(b1))
        b3 = n.layer2(b2)
        b4 = n.layer3(b3)
        b5 = n.layer4(b4)
        return b1, b2, b3, b4, b5


def fold_initializer_identities(path):
    """Replace Identity nodes that alias an initializer with a renamed copy.

    The exporter deduplicates equal constants through Identity nodes, which
    older ONNX importers (OpenCV 4.5) reject.
    """
    import onnx
    from onnx import numpy_helper

    model = onnx.load(path)
    graph = model.graph
    inits = {t.name: t for t in graph.initializer}
    keep = []
    for node in graph.node:
        if node.op_type == "Identity" and node.input[0] in inits:
            arr = numpy_helper.to_array(inits[node.input[0]])
            graph.initializer.append(numpy_helper.from_array(arr, node.output[0]))
        else:
            keep.append(node)
    del graph.node[:]
    graph.node.extend(keep)
    onnx.checker.check_model(model)
    onnx.save(model, path)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    ap.add_argument("--sidecar", required=True)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--weights", choices=["auto", "imagenet", "random"], default="auto")
    args = ap.parse_args()

    torch.manual_seed(args.seed)
    source = "random-init"
    net = None
    if args.weights in ("auto", "imagenet"):
        try:
            w = torchvision.models.ResNet50_Weights.IMAGENET1K_V1
            net = torchvision.models.resnet50(weights=w)
            source = "torchvision:IMAGENET1K_V1"
        except Exception as exc:  # no cached checkpoint and no network
            if args.weights == "imagenet":
                print(f"pretrained weights unavailable: {exc}", file=sys.stderr)
                return 1
    if net is None:
        net = torchvision.models.resnet50(weights=None)
    net.eval()

    model = Tapped(net).eval()
    dummy = torch.zeros(1, 3, 224, 224)
    torch.onnx.export(
        model, dummy, args.out,
        input_names=["input"],
        output_names=[f"block{i}" for i in range(1, 6)],
        opset_version=11,
        do_constant_folding=True,
        dynamo=False,
    )

    fold_initializer_identities(args.out)

    sidecar = {
        "input_size": [224, 224],
        "channel_order": "RGB",
        "mean": [0.485, 0.456, 0.406],
        "std": [0.229, 0.224, 0.225],
        "resize_filter": "bilinear",
        "weights_source": source,
        "seed": args.seed,
    }
    with open(args.sidecar, "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2)
        f.write("\n")
    print(source)
    return 0


if __name__ == "__main__":
    sys.exit(main())
