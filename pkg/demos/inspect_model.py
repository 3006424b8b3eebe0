"""Build one dual-stream model and look at what comes out.

Runs a small-capacity configuration end to end on a random probe input and
prints the stage maps, the pyramid, the parameter count and the fusion
gate diagnostics.
"""

from trifuse.harness import RunConfig, run_single

cfg = RunConfig(
    variant="B0",
    mechanism="mage_bite",
    stages=(1, 2, 3, 4),
    input_size=(96, 128),
    timing_reps=1,
)

report = run_single(cfg)

print(f"config key: {cfg.key()}")
print(f"parameters: {report.param_count:,}")
print(f"forward:    {report.forward_ms:.0f} ms")
print("stage maps:")
for shape in report.stage_shapes:
    print(f"  {shape}")
print("pyramid levels:")
for shape in report.pyramid_shapes:
    print(f"  {shape}")
print("fusion diagnostics (one entry per fused stage):")
for name, values in report.diagnostics.items():
    print(f"  {name}: {[round(v, 3) for v in values]}")
