# The same solver driven through its command-line interface, which writes
# CSV snapshots, a diagnostics table and a JSON summary for downstream tools
# (the plotting frontend consumes exactly these files).

import json
import os
import subprocess
import sys

outdir = "charflow_out_demo"
cmd = [
    sys.executable, "-m", "charflow.cli",
    "--scenario", "gaussian_breaking",
    "--lambda", "1",
    "--N", "1024",
    "--dt", "0.002",
    "--T", "2.0",
    "--snapshot-every", "250",
    "--check-every", "125",
    "--output-dir", outdir,
]
print("$", " ".join(cmd[1:]))
proc = subprocess.run(cmd, capture_output=True, text=True)
print(proc.stdout.strip())
print("exit code:", proc.returncode)

print("\nfiles written:")
for name in sorted(os.listdir(outdir)):
    print("  ", name)

with open(os.path.join(outdir, "summary.json")) as fh:
    summary = json.load(fh)
print("\nsummary highlights:")
for key in ("scenario", "lambda", "k", "E0", "energy_drift_max",
            "first_breaking_time", "holder_reference"):
    print(f"  {key}: {summary[key]}")
if summary["holder_fit"]:
    print(f"  holder_fit.exponent: {summary['holder_fit']['exponent']:.4f}")
