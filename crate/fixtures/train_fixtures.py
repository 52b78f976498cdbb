"""Regenerates the fixture controller networks in this directory.

    python3 fixtures/train_fixtures.py

arm.json  2 -> 12 tanh -> 2 identity, learned forward kinematics of a
          two-link planar arm (link lengths 10 and 7) over joint angles
          around [pi/3, 2pi/3]^2.
acc.json  5 -> 20 tanh -> 20 tanh -> 1 identity, imitates a speed/spacing
          adaptive-cruise law. Inputs: v_set, t_gap, v_e, d_rel, v_rel.

Input/output normalisation is folded into the first and last layers so the
stored networks consume raw physical quantities.
"""
import json
import math
import os

import torch

torch.manual_seed(0)
HERE = os.path.dirname(os.path.abspath(__file__))


def fold_and_dump(model, in_mean, in_scale, out_mean, out_scale, acts, path, note):
    linears = [m for m in model if isinstance(m, torch.nn.Linear)]
    layers = []
    for k, lin in enumerate(linears):
        w = lin.weight.detach().double().clone()
        b = lin.bias.detach().double().clone()
        if k == 0:
            b = b - w @ (in_mean / in_scale)
            w = w / in_scale
        if k == len(linears) - 1:
            w = w * out_scale[:, None]
            b = b * out_scale + out_mean
        layers.append({"weights": w.tolist(), "bias": b.tolist(), "activation": acts[k]})
    with open(path, "w") as f:
        json.dump({"note": note, "layers": layers}, f, indent=1)
        f.write("\n")


def train(model, x, y, steps, lr):
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    for i in range(steps):
        opt.zero_grad()
        loss = torch.mean((model(x) - y) ** 2)
        loss.backward()
        opt.step()
    return loss.item()


def arm():
    l1, l2 = 10.0, 7.0
    lo, hi = 0.9, 2.25
    th = lo + (hi - lo) * torch.rand(20000, 2, dtype=torch.float64)
    x = l1 * torch.cos(th[:, 0]) + l2 * torch.cos(th[:, 0] + th[:, 1])
    y = l1 * torch.sin(th[:, 0]) + l2 * torch.sin(th[:, 0] + th[:, 1])
    out = torch.stack([x, y], 1)
    in_mean = torch.full((2,), (lo + hi) / 2, dtype=torch.float64)
    in_scale = torch.full((2,), (hi - lo) / 2, dtype=torch.float64)
    out_mean, out_scale = out.mean(0), out.std(0)
    model = torch.nn.Sequential(
        torch.nn.Linear(2, 12), torch.nn.Tanh(), torch.nn.Linear(12, 2)
    ).double()
    loss = train(model, (th - in_mean) / in_scale, (out - out_mean) / out_scale, 6000, 1e-2)
    print("arm normalised mse", loss)
    fold_and_dump(model, in_mean, in_scale, out_mean, out_scale, ["tanh", "identity"],
                  os.path.join(HERE, "arm.json"),
                  "two-link arm forward kinematics (l1=10, l2=7); see train_fixtures.py")


def acc_law(v_set, t_gap, v_e, d_rel, v_rel):
    d_safe = 10.0 + t_gap * v_e
    speed = 0.5 * (v_set - v_e)
    spacing = 0.2 * (d_rel - d_safe) + 0.8 * v_rel
    return torch.clamp(torch.minimum(speed, spacing), -3.0, 2.0)


def acc():
    lo = torch.tensor([25.0, 1.0, 15.0, 20.0, -15.0], dtype=torch.float64)
    hi = torch.tensor([35.0, 2.0, 35.0, 110.0, 5.0], dtype=torch.float64)
    x = lo + (hi - lo) * torch.rand(40000, 5, dtype=torch.float64)
    y = acc_law(*x.T)[:, None]
    in_mean, in_scale = (lo + hi) / 2, (hi - lo) / 2
    out_mean = torch.zeros(1, dtype=torch.float64)
    out_scale = torch.full((1,), 3.0, dtype=torch.float64)
    model = torch.nn.Sequential(
        torch.nn.Linear(5, 20), torch.nn.Tanh(),
        torch.nn.Linear(20, 20), torch.nn.Tanh(),
        torch.nn.Linear(20, 1),
    ).double()
    loss = train(model, (x - in_mean) / in_scale, (y - out_mean) / out_scale, 8000, 3e-3)
    print("acc normalised mse", loss)
    fold_and_dump(model, in_mean, in_scale, out_mean, out_scale, ["tanh", "tanh", "identity"],
                  os.path.join(HERE, "acc.json"),
                  "adaptive cruise controller imitating a speed/spacing law; see train_fixtures.py")


if __name__ == "__main__":
    arm()
    acc()
