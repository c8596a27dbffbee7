"""Synthesize a short street scene, label it and print the evaluation report.

    python3 gallery/end_to_end.py [workdir]
"""
import sys
import tempfile
from pathlib import Path

from autolabel3d.pipeline import PipelineConfig, Run, report
from autolabel3d.synth import traffic_scene, write_scenario

work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="autolabel3d-"))
spec = traffic_scene(seed=7, n_frames=12, n_objects=8, lidar_beams=32, lidar_azimuths=768)
write_scenario(spec, work / "bundle")

cfg = PipelineConfig()
cfg.completion.method = "mirror"
for stage, status in Run(work / "bundle", work / "run", cfg).execute():
    print(f"{stage:<9} {status}")
print()
print(report(work / "run"))
