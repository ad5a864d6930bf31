#!/usr/bin/env python3
# Evaluates the C=1, F'=2, T'=1 two-step attention example with plain floats
# and prints the intermediate values as JSON.
import json
import math


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def softmax(xs):
    m = max(xs)
    e = [math.exp(x - m) for x in xs]
    s = sum(e)
    return [v / s for v in e]


z = [1.0, 3.0]  # Z[c=0][f][t=0]
a1 = [sigmoid(1.0 * v + 0.0) for v in z]
za1 = softmax(a1)
zc1 = [1.0 * v + 0.0 for v in z]
zp1 = sum(c * w for c, w in zip(zc1, za1))
za2 = softmax([sigmoid(0.0 * zp1 + 0.0)])
zc2 = sigmoid(1.0 * zp1 + 0.0)
p = zc2 * za2[0]

print(json.dumps({"a1": a1, "za1": za1, "zp1": zp1, "za2": za2[0], "p": p}))
