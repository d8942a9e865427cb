"""Regenerate the chain fixtures in configs/ from physical link data.

Each link is given by mass, centre of mass, inertia about the centre of
mass and joint friction.  The seven-joint arm also carries an armature
inertia about each joint axis, standing in for the reflected rotor inertia
of a geared drive; without it the distal joints are too light for a 1 kHz
loop with smoothed Coulomb friction.
"""
from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np
import yaml

from semiparam.chain import plausible_link_params


def link(mass, com, inertia_diag, fc, fv, axis=None, armature=0.0):
    Ic = np.diag(inertia_diag).astype(float)
    if axis is not None:
        a = np.asarray(axis, dtype=float)
        Ic += armature * np.outer(a, a)
    return [round(float(v), 10) for v in plausible_link_params(mass, com, Ic, fc, fv)]


def planar2() -> dict:
    return {
        "name": "planar2",
        "gravity": [0.0, -9.81, 0.0],
        "joints": [
            {"axis": [0, 0, 1], "origin_rotation_rpy": [0, 0, 0], "origin_translation": [0, 0, 0],
             "pi_reference": link(2.0, [0.25, 0, 0], [0.005, 0.04, 0.04], 0.3, 0.2)},
            {"axis": [0, 0, 1], "origin_rotation_rpy": [0, 0, 0], "origin_translation": [0.5, 0, 0],
             "pi_reference": link(1.2, [0.2, 0, 0], [0.003, 0.02, 0.02], 0.2, 0.15)},
        ],
    }


LWR7 = [
    # axis, z offset, mass, com, inertia diag about com, fc, fv, armature
    ([0, 0, 1], 0.11, 2.7, [0, -0.03, 0.12], [0.02, 0.02, 0.005], 0.8, 0.6, 0.4),
    ([0, -1, 0], 0.2, 2.7, [0, 0.03, 0.08], [0.02, 0.02, 0.005], 0.8, 0.6, 0.4),
    ([0, 0, 1], 0.2, 2.7, [0, 0.03, 0.12], [0.02, 0.02, 0.005], 0.6, 0.5, 0.25),
    ([0, 1, 0], 0.2, 2.7, [0, -0.03, 0.08], [0.02, 0.02, 0.005], 0.6, 0.5, 0.25),
    ([0, 0, 1], 0.2, 1.7, [0, 0.02, 0.11], [0.01, 0.01, 0.003], 0.3, 0.3, 0.08),
    ([0, -1, 0], 0.19, 1.6, [0, -0.01, 0.02], [0.004, 0.004, 0.003], 0.3, 0.3, 0.08),
    ([0, 0, 1], 0.078, 0.3, [0, 0, 0.02], [0.0003, 0.0003, 0.0004], 0.2, 0.2, 0.04),
]


def lwr7() -> dict:
    joints = []
    for axis, dz, m, c, I, fc, fv, arm in LWR7:
        joints.append({"axis": axis, "origin_rotation_rpy": [0, 0, 0], "origin_translation": [0, 0, dz],
                       "pi_reference": link(m, c, I, fc, fv, axis, arm)})
    return {"name": "lwr7", "gravity": [0.0, 0.0, -9.81], "joints": joints}


HEADERS = {
    "planar2": "# Two-link planar arm moving in the gravity plane (oracle fixture).\n",
    "lwr7": "# Seven-joint arm with LWR-like geometry, plausible stand-in inertial parameters\n"
            "# and an armature inertia about every joint axis.\n",
}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "configs"))
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, doc in (("planar2", planar2()), ("lwr7", lwr7())):
        text = HEADERS[name] + yaml.safe_dump(doc, sort_keys=False, default_flow_style=None, width=100)
        (out / f"{name}.yaml").write_text(text)
        print(f"wrote {out / (name + '.yaml')}")


if __name__ == "__main__":
    main()
