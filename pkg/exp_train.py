import sys
import time
import numpy as np
from chartcomp.datagen import ArrayGeometry, Rect, SceneConfig, SplitCounts, build_scene, generate_dataset
from chartcomp.charting import isomap_init
from chartcomp.model import ModelConfig, init_model
from chartcomp.training import TrainConfig, train
from chartcomp.evaluate import rho_values

scatterers = int(sys.argv[1]) if len(sys.argv) > 1 else 0
sigma_b = float(sys.argv[2]) if len(sys.argv) > 2 else 1.0
lr = float(sys.argv[3]) if len(sys.argv) > 3 else 1e-3
epochs = int(sys.argv[4]) if len(sys.argv) > 4 else 50
bs_x = float(sys.argv[5]) if len(sys.argv) > 5 else -40.0

t0 = time.perf_counter()
cfg = SceneConfig(carrier_frequency=float(sys.argv[6]) if len(sys.argv) > 6 else 3.5e9, bandwidth=20e6, subcarrier_count=8,
                  area=Rect(0.0, 0.0, 20.0, 20.0), scatterer_count=scatterers,
                  bs_position=(bs_x, 10.0), rng_seed=11)
geom = ArrayGeometry(antenna_count=16)
scene = build_scene(cfg)
ds = generate_dataset(scene, geom, SplitCounts(500, 1000, 500), placement="uniform")
Hc = ds.channel_matrix("calibration")
chart = isomap_init(Hc, k=10, d=2)
print(f"chart scale: std={chart.Z.std(axis=1)}, range={chart.Z.min():.2f}..{chart.Z.max():.2f}",
      f"({time.perf_counter()-t0:.1f}s)")

mcfg = ModelConfig(d=2, F=64, T=64, sigma_B=sigma_b, target_subcarrier=4, rng_seed=5)
enc, dec = init_model(mcfg, chart, Hc, n_out=16)
tcfg = TrainConfig(learning_rate=lr, batch_size=64, epochs=epochs, rng_seed=7,
                   patience=200, val_fraction=0.1)
res = train(enc, dec, ds, 4, tcfg)
Ht = ds.channel_matrix("test")
Tt = ds.target_blocks("test", 4)
vals = rho_values(res.enc, res.dec, Ht, Tt)
last = res.log[-1]
print(f"scat={scatterers} sigma_B={sigma_b} lr={lr} epochs={len(res.log)} "
      f"best@{res.best_epoch}: test median={np.median(vals):.4f} mean={vals.mean():.4f} "
      f"final_loss={last.train_loss:.4f} ({time.perf_counter()-t0:.1f}s)")
