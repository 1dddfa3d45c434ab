"""End-to-end toy run: corpus -> dataset -> three trainings -> synthesis.

Generates a small procedural face corpus, builds the sketch dataset (three
abstraction levels plus region-recombined variants), pretrains the region
sketch coder and the image codec, trains the conditional denoiser, and
finally synthesizes one held-out face from its sketch at every abstraction
level.  Everything lands under ./demo_run so the other demos can reuse the
checkpoint.

Run:  python3 demos/02_train_and_synthesize.py        (~1 minute on CPU)

The equivalent CLI session, for script-averse days:

    sketchdiff dataset --images demo_run/raw --out demo_run/ds --canvas 32
    sketchdiff train-stage1 --config s1.json --dataset demo_run/ds --out s1.ckpt
    sketchdiff train-ae     --config ae.json --dataset demo_run/ds --out ae.ckpt
    sketchdiff train-stage2 --config s2.json --dataset demo_run/ds \
        --stage1 s1.ckpt --image-ae ae.ckpt --out demo_run/model.ckpt
    sketchdiff sample --ckpt demo_run/model.ckpt --sketch <png> --out <png>

(each train config needs an "arch" block sized for the dataset, here
dataclasses.asdict(TOY_ARCH); without one it defaults to the full-scale
canvas-256 profile and the command exits with a config error)
"""

import time
from pathlib import Path

from sketchdiff.checkpoint import save_checkpoint
from sketchdiff.config import TOY_ARCH, TOY_DIFFUSION, DatasetConfig, TrainConfig
from sketchdiff.data import build_dataset, generate_shapes_corpus, load_sketch_png, save_image_png
from sketchdiff.evaluation import rec_score
from sketchdiff.pipeline import SynthesisPipeline
from sketchdiff.training import train_codec, train_stage1, train_stage2

out = Path("demo_run")
t0 = time.time()

print("1/5  generating a 48-face corpus at 32x32 ...")
generate_shapes_corpus(out / "raw", n=48, canvas=32, seed=12)

print("2/5  building the dataset (3 abstraction levels + 2 recombined variants each) ...")
manifest = build_dataset(out / "raw", out / "ds", DatasetConfig(canvas=32, sra_variants=2, seed=3))
ds = out / "ds"
print(f"     {len(manifest['records'])} records, split "
      f"{ {k: len(v) for k, v in manifest['split'].items()} }")

print("3/5  pretraining sketch coder and image codec ...")
s1 = train_stage1(
    ds, manifest, TrainConfig(stage=1, epochs=20, batch_size=8, lr=2e-3, seed=5), TOY_ARCH
)
ae = train_codec(
    ds, manifest, TrainConfig(stage=0, epochs=60, batch_size=8, lr=2e-3, seed=5), TOY_ARCH
)
print(f"     sketch-coder loss {s1.meta['metrics'][-1]['loss']:.4f}, "
      f"codec per-pixel MAE {ae.meta['codec_stats']['train_mae']:.3f}")

print("4/5  training the conditional denoiser (coder and codec stay frozen) ...")
s2 = train_stage2(
    ds, manifest, s1, ae,
    TrainConfig(stage=2, epochs=120, batch_size=8, lr=1e-3, grad_clip=1.0, seed=5),
    TOY_DIFFUSION,
)
save_checkpoint(s2, out / "model.ckpt")
print(f"     noise-prediction loss {s2.meta['metrics'][-1]['loss']:.3f} "
      f"-> {out / 'model.ckpt'}")

print("5/5  synthesizing one held-out face from its sketch ...")
pipe = SynthesisPipeline(s2)
record = next(r for r in manifest["records"] if r["id"] == manifest["split"]["test"][0])
(out / "samples").mkdir(exist_ok=True)
for level in ("low", "mid", "high"):
    sketch = load_sketch_png(ds / record["sketches"][level])
    image = pipe.synthesize(sketch, sampler="ddim", seed=7)
    save_image_png(out / "samples" / f"{record['id']}_{level}.png", image)
    print(f"     {level:4s}: stroke recall {rec_score(sketch, image, 1):.2f} "
          f"-> samples/{record['id']}_{level}.png")

print(f"\ndone in {time.time() - t0:.0f}s; demos 03 and 04 reuse {out / 'model.ckpt'}")
