#!/usr/bin/env python3
# Copyright (c) 2026, The stflow Authors.
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

"""Black-box checks of the stflow command line: exit codes and file schemas.

usage: cli_e2e.py /path/to/stflow
"""

import hashlib
import json
import math
import os
import struct
import subprocess
import sys
import tempfile
import unittest

BINARY = None


def run(*args, ok=True):
    proc = subprocess.run([BINARY, *map(str, args)], capture_output=True, text=True)
    if ok and proc.returncode != 0:
        raise AssertionError(f"{args} exited {proc.returncode}: {proc.stderr}")
    return proc


def write_atns(path, layout, text_tokens, layers):
    """layers: (name, kind, heads x query x key nested lists)"""
    entries, payloads = [], []
    for name, kind, weights in layers:
        heads, q, k = len(weights), len(weights[0]), len(weights[0][0])
        flat = [v for h in weights for row in h for v in row]
        payloads.append(struct.pack(f"<{len(flat)}f", *flat))
        entries.append({"name": name, "kind": kind, "heads": heads, "query_tokens": q,
                        "key_tokens": k, "offset": 0, "dtype": "f32"})
    manifest = {"text_tokens": text_tokens,
                "layout": dict(zip(("frames", "height", "width"), layout)),
                "layers": entries}
    # offsets change the manifest length; iterate until stable
    while True:
        blob = json.dumps(manifest).encode()
        cursor, offsets = 16 + len(blob), []
        for p in payloads:
            cursor = (cursor + 63) // 64 * 64
            offsets.append(cursor)
            cursor += len(p)
        if offsets == [e["offset"] for e in entries]:
            break
        for e, o in zip(entries, offsets):
            e["offset"] = o
    out = bytearray(b"ATNS" + struct.pack("<IQ", 1, len(blob)) + blob)
    for p, o in zip(payloads, offsets):
        out += bytes(o - len(out)) + p
    with open(path, "wb") as f:
        f.write(out)


def read_pgm(path):
    with open(path, "rb") as f:
        data = f.read()
    magic, dims, maxval, pixels = data.split(b"\n", 3)
    w, h = map(int, dims.split())
    assert magic == b"P5" and maxval == b"255", (magic, maxval)
    assert len(pixels) == w * h
    return w, h, list(pixels)


def running_example(path, self_rows=((0.7, 0.3), (0.2, 0.8))):
    write_atns(path, (1, 1, 2), ["a", "b"],
               [("cross", "cross", [[[0.6, 0.4], [0.1, 0.9]]]),
                ("self", "self_spatial", [list(map(list, self_rows))])])


def std(xs):
    m = sum(xs) / len(xs)
    return math.sqrt(sum((x - m) ** 2 for x in xs) / len(xs))


class Cli(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.dir = cls.tmp.name
        cls.toy = os.path.join(cls.dir, "toy.atns")
        run("toy-stack", "--seed", 3, "--frames", 2, "--height", 4, "--width", 4, "--dim", 8,
            "--text-tokens", 4, "--out", cls.toy)

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def path(self, name):
        return os.path.join(self.dir, name)

    def attribute(self, *flags, stack=None):
        out = self.path("r.json")
        run("attribute", "--input", stack or self.toy, "--out", out, *flags)
        with open(out) as f:
            return json.load(f)

    def test_attribute_heatmap_segment(self):
        r = self.attribute("--mode", "soft", "--tau", 0.01, "--tokens", "0,2")
        for key in ("version", "mode", "tau", "group_agg", "tokens", "layout", "scores", "heatmaps", "input_digest"):
            self.assertIn(key, r)
        self.assertEqual(r["mode"], "soft")
        self.assertEqual(r["tokens"], [0, 2])
        self.assertEqual(sorted(r["scores"]), ["0", "2"])
        self.assertEqual(r["layout"], {"frames": 2, "height": 4, "width": 4})
        for t in ("0", "2"):
            self.assertEqual(len(r["heatmaps"][t]), 32)
            self.assertTrue(all(math.isfinite(v) for v in r["heatmaps"][t]))
        with open(self.toy, "rb") as f:
            self.assertEqual(r["input_digest"], "sha256:" + hashlib.sha256(f.read()).hexdigest())

        result = self.path("r.json")
        img = self.path("h.pgm")
        run("heatmap", "--input", result, "--token", 2, "--out", img)
        w, h, px = read_pgm(img)
        self.assertEqual((w, h), (4, 8))
        for frame in (px[:16], px[16:]):
            self.assertEqual((min(frame), max(frame)), (0, 255))

        run("heatmap", "--input", result, "--token", 0, "--out", img, "--size", "8x12")
        w, h, px = read_pgm(img)
        self.assertEqual((w, h), (12, 16))

        run("heatmap", "--input", result, "--token", 0, "--out", img, "--segment", "mean")
        _, _, px = read_pgm(img)
        self.assertTrue(set(px) <= {0, 255})
        self.assertIn(255, px)

    def test_results_are_deterministic(self):
        outs = []
        for name in ("d1.json", "d2.json"):
            run("attribute", "--input", self.toy, "--mode", "hard", "--out", self.path(name))
            with open(self.path(name), "rb") as f:
                outs.append(f.read())
        self.assertEqual(outs[0], outs[1])

    def test_all_modes(self):
        for mode in ("exact", "hard", "soft", "rollout", "cross"):
            r = self.attribute("--mode", mode, "--no-heatmaps")
            self.assertEqual(r["mode"], mode)
            self.assertNotIn("heatmaps", r)
            self.assertEqual(len(r["scores"]), 4)
            self.assertTrue(all(v >= 0 for v in r["scores"].values()))

    def test_exact_running_example(self):
        stack = self.path("running.atns")
        running_example(stack)
        r = self.attribute("--mode", "exact", stack=stack)
        # every unit a token injects fits through the sink edges
        self.assertAlmostEqual(r["scores"]["0"], 0.7, places=6)
        self.assertAlmostEqual(r["scores"]["1"], 1.3, places=6)
        hard = self.attribute("--mode", "hard", stack=stack)
        for t in ("0", "1"):
            self.assertLessEqual(hard["scores"][t], r["scores"][t] + 1e-9)

        info = run("graph-info", "--input", stack).stdout
        self.assertIn("1 group, suffix length 1", info)
        doc = json.loads(run("graph-info", "--input", stack, "--json").stdout)
        self.assertTrue(doc["valid"])
        self.assertEqual(len(doc["groups"]), 1)
        self.assertEqual(doc["groups"][0]["suffix_length"], 1)
        self.assertEqual([l["kind"] for l in doc["layers"]], ["cross", "self_spatial"])

    def test_group_sum_dominates_max(self):
        mx = self.attribute("--mode", "hard", "--group-agg", "max")
        sm = self.attribute("--mode", "hard", "--group-agg", "sum")
        self.assertEqual(sm["group_agg"], "sum")
        for t, v in mx["scores"].items():
            self.assertGreaterEqual(sm["scores"][t], v)

    def test_heatmap_examples(self):
        def result(layout, values):
            p = self.path("hand.json")
            with open(p, "w") as f:
                json.dump({"version": 1, "layout": dict(zip(("frames", "height", "width"), layout)),
                           "heatmaps": {"0": values}}, f)
            return p

        img = self.path("hand.pgm")
        run("heatmap", "--input", result((1, 1, 2), [0.6, 0.4]), "--token", 0, "--out", img)
        self.assertEqual(read_pgm(img), (2, 1, [255, 0]))
        run("heatmap", "--input", result((1, 2, 2), [0.3] * 4), "--token", 0, "--out", img)
        self.assertEqual(read_pgm(img)[2], [0, 0, 0, 0])
        run("heatmap", "--input", result((1, 2, 2), [1, 2, 3, 4]), "--token", 0, "--out", img, "--segment", "mean")
        self.assertEqual(read_pgm(img)[2], [0, 0, 255, 255])

    def test_missing_heatmap_exits_3(self):
        run("attribute", "--input", self.toy, "--no-heatmaps", "--out", self.path("nh.json"))
        p = run("heatmap", "--input", self.path("nh.json"), "--token", 0, "--out", self.path("x.pgm"), ok=False)
        self.assertEqual(p.returncode, 3)
        run("attribute", "--input", self.toy, "--tokens", "1", "--out", self.path("one.json"))
        p = run("heatmap", "--input", self.path("one.json"), "--token", 0, "--out", self.path("x.pgm"), ok=False)
        self.assertEqual(p.returncode, 3)

    def test_usage_errors_exit_2(self):
        cases = [
            ("attribute", "--input", self.toy, "--mode", "bogus"),
            ("attribute", "--input", self.toy, "--tokens", "9"),
            ("attribute", "--input", self.toy, "--frobnicate"),
            ("attribute",),
            ("heatmap", "--input", "x.json", "--token", 0),
            ("bench", "--repeat", 1),
            ("no-such-command",),
            ("equalize", "--steps", 0, "--lr", 0, "--out-dir", self.path("eq_bad")),
            ("heatmap", "--input", self.path("r.json"), "--token", 0, "--out", self.path("x.pgm"), "--size", "8"),
        ]
        for args in cases:
            with self.subTest(args=args):
                self.assertEqual(run(*args, ok=False).returncode, 2)
        p = run("bench", "--video-tokens", 1024, "--exact", ok=False)
        self.assertEqual(p.returncode, 2)
        self.assertIn("256", p.stderr)

    def test_input_errors_exit_3(self):
        missing = self.path("does-not-exist.atns")
        self.assertEqual(run("attribute", "--input", missing, ok=False).returncode, 3)
        self.assertEqual(run("graph-info", "--input", missing, ok=False).returncode, 3)

        corrupt = self.path("corrupt.atns")
        with open(self.toy, "rb") as f:
            data = bytearray(f.read())
        data[:4] = b"NOPE"
        with open(corrupt, "wb") as f:
            f.write(data)
        self.assertEqual(run("attribute", "--input", corrupt, ok=False).returncode, 3)

        invalid = self.path("invalid.atns")
        running_example(invalid, self_rows=((0.9, 0.3), (0.2, 0.8)))
        p = run("graph-info", "--input", invalid, ok=False)
        self.assertEqual(p.returncode, 3)
        self.assertIn("invalid stack", p.stdout)
        doc = json.loads(run("graph-info", "--input", invalid, "--json", ok=False).stdout)
        self.assertFalse(doc["valid"])
        self.assertGreaterEqual(len(doc["violations"]), 1)
        self.assertEqual(run("attribute", "--input", invalid, ok=False).returncode, 3)

    def test_internal_errors_exit_4(self):
        p = run("attribute", "--input", self.toy, "--out", self.path("no/such/dir/r.json"), ok=False)
        self.assertEqual(p.returncode, 4)

    def test_equalize(self):
        out = self.path("eq0")
        run("equalize", "--seed", 7, "--tokens", "0,2", "--steps", 0, "--out-dir", out)
        with open(os.path.join(out, "trajectory.jsonl")) as f:
            self.assertEqual(f.read(), "")
        with open(os.path.join(out, "report.json")) as f:
            rep = json.load(f)
        self.assertEqual(rep["iterations"], 0)
        for phase in ("before", "after"):
            self.assertEqual(sorted(rep[phase]), ["cross", "exact", "hard", "rollout", "soft"])
        self.assertEqual(rep["before"], rep["after"])
        run("graph-info", "--input", os.path.join(out, "final.atns"))

        def trajectory(loss):
            d = self.path("eq_" + loss)
            run("equalize", "--seed", 7, "--frames", 2, "--height", 4, "--width", 4, "--dim", 8, "--text-tokens", 4,
                "--tokens", "0,2", "--steps", 200, "--loss", loss, "--lr", 0.01, "--threshold", 1e9, "--out-dir", d)
            with open(os.path.join(d, "trajectory.jsonl")) as f:
                lines = [json.loads(l) for l in f]
            with open(os.path.join(d, "report.json")) as f:
                return lines, json.load(f)

        lines, rep = trajectory("min")
        self.assertEqual(len(lines), 200)
        for i, l in enumerate(lines):
            self.assertEqual(set(l), {"iteration", "loss", "tokens", "scores", "grad_norm", "updated"})
            self.assertEqual(l["iteration"], i)
        mins = [min(l["scores"]) for l in lines]
        # least-squares slope of the reported min score
        n = len(mins)
        xbar, ybar = (n - 1) / 2, sum(mins) / n
        slope = sum((i - xbar) * (y - ybar) for i, y in enumerate(mins)) / sum((i - xbar) ** 2 for i in range(n))
        self.assertGreaterEqual(slope, 0.0)
        self.assertGreater(rep["final_loss"], mins[0])

        lines, rep = trajectory("variance")
        before = list(rep["before"]["soft"].values())
        after = list(rep["after"]["soft"].values())
        self.assertLess(std(after), std(before))

    def test_bench_report(self):
        p = run("bench", "--layers", 2, "--video-tokens", 16, "--text-tokens", 4, "--repeat", 3, "--exact", "--json")
        doc = json.loads(p.stdout)
        methods = [r["method"] for r in doc["records"]]
        self.assertEqual(sorted(methods), ["cross", "exact", "hard", "rollout", "soft"])
        for r in doc["records"]:
            self.assertGreater(r["seconds"], 0)
            self.assertGreaterEqual(r["repeats"], 3)
            self.assertEqual((r["video_tokens"], r["text_tokens"]), (16, 4))

    def test_toy_stack_round_trip(self):
        p = self.path("toy1.atns")
        run("toy-stack", "--frames", 1, "--height", 2, "--width", 2, "--dim", 4, "--text-tokens", 2, "--out", p)
        with open(p, "rb") as f:
            head = f.read(16)
        self.assertEqual(head[:4], b"ATNS")
        self.assertEqual(struct.unpack("<I", head[4:8])[0], 1)
        doc = json.loads(run("graph-info", "--input", p, "--json").stdout)
        self.assertEqual(doc["video_tokens"], 4)


if __name__ == "__main__":
    BINARY = os.path.abspath(sys.argv.pop(1))
    unittest.main(verbosity=2)
