import json

import numpy as np
import pytest
from scipy import ndimage

from giscsim import pipeline
from giscsim.config import load_config
from giscsim.errors import ConfigError, PairingError
from giscsim.hsi import DatasetManifest, HsiCube, load_hsib, store_hsib
from giscsim.sensing import reshape_measurement

BANDS4 = [560.0 + i * (140.0 / 3.0) for i in range(4)]


def make_sources(root, count=2, size=32):
    rng = np.random.default_rng(0)
    paths = []
    for i in range(count):
        data = ndimage.gaussian_filter(rng.random((size, size, 4)), (2, 2, 0.5))
        cube = HsiCube.from_array(data, BANDS4, name=f"cube{i}")
        path = root / f"cube{i}.hsib"
        store_hsib(cube, path)
        paths.append(path)
    return paths


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    """One small pipeline run shared by the checks below."""
    root = tmp_path_factory.mktemp("pipe")
    make_sources(root)
    cfg = load_config(
        None,
        [
            f'experiment.out_dir="{root}/out"',
            "experiment.master_seed=11",
            "optics.screen_size=128",
            "optics.refractive_delta=2.0",
            "sensing.n=16",
            "sensing.m=32",
            "sensing.bands=4",
            'sensing.noise_kind="additive_gaussian"',
            "sensing.target_snr_db=30.0",
            "recon.max_iters=50",
            f'dataset.cubes=["{root}/cube*.hsib"]',
            "dataset.slice_size=16",
            "dataset.slice_stride=16",
            "dataset.split_fraction=0.75",
        ],
    )
    pipeline.cmd_gen_speckles(cfg)
    pipeline.cmd_slice(cfg)
    pipeline.cmd_measure(cfg)
    pipeline.cmd_reconstruct(cfg)
    pipeline.cmd_reconstruct(cfg, "dgi")
    pipeline.cmd_export_for_net(cfg)
    pipeline.cmd_eval(cfg)
    return cfg


class TestStages:
    def test_calibration_files_and_stats(self, run):
        for kind in ("rayleigh", "super_rayleigh"):
            kind_dir = run.out_path() / "calibration" / kind
            assert len(list(kind_dir.glob("band_*.hsib"))) == 4
            meta = json.loads((kind_dir / "calibration.json").read_text())
            assert meta["pattern_size"] == 32 + 2 * 16
            contrasts = [s["contrast"] for s in meta["band_stats"]]
            if kind == "super_rayleigh":
                assert min(contrasts) > 1.5  # gamma=2 boosts contrast
            else:
                assert max(abs(c - 1.0) for c in contrasts) < 0.3  # small-pattern spread

    def test_slice_outputs_and_manifest(self, run):
        slices = sorted((run.out_path() / "slices").glob("*.hsib"))
        assert len(slices) == 8  # two 32x32 cubes, 16 px tiles
        manifest = DatasetManifest.load(run.out_path() / "slices" / "manifest.json")
        roles = [e.role for e in manifest.entries]
        assert "train" in roles and "val" in roles
        total = sum(len(e.slice_indices) for e in manifest.entries)
        assert total == 8

    def test_measurements_have_sidecars(self, run):
        meas = sorted((run.out_path() / "measurements" / "rayleigh").glob("*.hsib"))
        assert len(meas) == 8
        sidecar = json.loads(meas[0].with_suffix(".json").read_text())
        assert sidecar["noise_kind"] == "additive_gaussian"
        assert sidecar["target_snr_db"] == 30.0
        assert sidecar["data_hash"] == run.data_hash()
        assert isinstance(sidecar["operator_fingerprint"], int)

    def test_estimates_clamped_and_shaped(self, run):
        ests = sorted(
            (run.out_path() / "estimates" / "rayleigh" / "cs_fista").glob("*.hsib")
        )
        assert len(ests) == 8
        cube = load_hsib(ests[0])
        assert cube.data.shape == (16, 16, 4)
        assert cube.data.min() >= 0.0 and cube.data.max() <= 1.0
        trace = (ests[0].parent / f"{ests[0].stem}.trace.csv").read_text().splitlines()
        assert trace[0] == "iter,objective,wall_ms"
        assert len(trace) > 1

    def test_bundle_triples(self, run):
        bundle = run.out_path() / "bundle" / "super_rayleigh"
        meta = json.loads((bundle / "bundle.json").read_text())
        assert meta["measurement_shape"] == [32, 32, 1]
        assert meta["cube_shape"] == [16, 16, 4]
        assert len(meta["entries"]) == 8
        roles = {e["role"] for e in meta["entries"]}
        assert roles <= {"train", "val"}
        entry = meta["entries"][0]
        y = load_hsib(bundle / entry["measurement"])
        cs = load_hsib(bundle / entry["cs_estimate"])
        gt = load_hsib(bundle / entry["truth"])
        assert y.data.shape == (32, 32, 1)
        assert cs.data.shape == (16, 16, 4)
        assert gt.data.shape == (16, 16, 4)
        # the canonical measurement quadrant-reshapes at the network boundary
        assert reshape_measurement(y.data[:, :, 0]).shape == (16, 16, 4)

    def test_eval_tables(self, run):
        per_slice = (run.out_path() / "eval" / "per_slice.csv").read_text().splitlines()
        summary = (run.out_path() / "eval" / "summary.csv").read_text().splitlines()
        assert per_slice[0] == "name,algorithm,speckle_kind,psnr_db,ssim,sam_rad"
        assert len(per_slice) == 1 + 8 * 2 * 2  # slices x kinds x algorithms
        assert len(summary) == 1 + 4  # one MEAN row per (kind x algorithm)
        assert all(line.split(",")[0] == "MEAN" for line in summary[1:])

    def test_summary_means_match_rows(self, run):
        rows = (run.out_path() / "eval" / "per_slice.csv").read_text().splitlines()[1:]
        summary = (run.out_path() / "eval" / "summary.csv").read_text().splitlines()[1:]
        for line in summary:
            _, algo, kind, psnr_s, *_ = line.split(",")
            members = [
                float(r.split(",")[3])
                for r in rows
                if r.split(",")[1] == algo and r.split(",")[2] == kind
            ]
            assert float(psnr_s) == pytest.approx(np.mean(members), abs=1e-6)


class TestGuards:
    def test_measure_requires_calibration(self, tmp_path):
        cfg = load_config(None, [f'experiment.out_dir="{tmp_path}/empty"'])
        with pytest.raises(ConfigError, match="run (slice|gen-speckles) first"):
            pipeline.cmd_measure(cfg)

    def test_eval_refuses_foreign_hash(self, run):
        est_dir = run.out_path() / "estimates" / "rayleigh" / "cs_fista"
        victim = sorted(est_dir.glob("*.json"))[0]
        original = victim.read_text()
        doctored = json.loads(original)
        doctored["config_hash"] = "feedfacefeedface"
        victim.write_text(json.dumps(doctored))
        try:
            with pytest.raises(PairingError, match="refusing to mix"):
                pipeline.cmd_eval(run)
        finally:
            victim.write_text(original)

    def test_measurement_pairing_enforced(self, run):
        with pytest.raises(PairingError):
            pipeline.load_measurement(
                load_config(None, [f'experiment.out_dir="{run.out_dir}"',
                                   "experiment.master_seed=999"]),
                "rayleigh",
                sorted((run.out_path() / "measurements" / "rayleigh").glob("*.hsib"))[0].stem,
            )


class TestDeterminism:
    def test_rerun_is_byte_identical(self, tmp_path):
        make_sources(tmp_path)
        overrides = [
            "experiment.master_seed=4",
            "optics.screen_size=128",
            "optics.refractive_delta=2.0",
            "sensing.n=16",
            "sensing.m=32",
            "sensing.bands=4",
            'sensing.noise_kind="additive_gaussian"',
            'sensing.speckle_kinds=["rayleigh"]',
            "recon.max_iters=25",
            f'dataset.cubes=["{tmp_path}/cube*.hsib"]',
            "dataset.slice_size=16",
            "dataset.slice_stride=16",
        ]
        outputs = {}
        for run_dir in ("a", "b"):
            cfg = load_config(
                None, overrides + [f'experiment.out_dir="{tmp_path}/{run_dir}"']
            )
            pipeline.cmd_gen_speckles(cfg)
            pipeline.cmd_slice(cfg)
            pipeline.cmd_measure(cfg)
            pipeline.cmd_reconstruct(cfg)
            pipeline.cmd_eval(cfg)
            root = cfg.out_path()
            blob = {}
            for path in sorted(root.rglob("*")):
                if not path.is_file() or path.name == "config.json":
                    continue
                rel = str(path.relative_to(root))
                data = path.read_bytes()
                if rel.endswith(".trace.csv"):
                    data = b"\n".join(
                        b",".join(line.split(b",")[:2]) for line in data.splitlines()
                    )
                blob[rel] = data
            outputs[run_dir] = blob
        assert outputs["a"].keys() == outputs["b"].keys()
        for rel in outputs["a"]:
            assert outputs["a"][rel] == outputs["b"][rel], f"{rel} differs"


class TestWorkers:
    def test_thread_pool_matches_sequential(self, tmp_path):
        make_sources(tmp_path)
        base = [
            "experiment.master_seed=4",
            "optics.screen_size=128",
            "optics.refractive_delta=2.0",
            "sensing.n=16",
            "sensing.m=32",
            "sensing.bands=4",
            'sensing.noise_kind="additive_gaussian"',
            'sensing.speckle_kinds=["rayleigh"]',
            "recon.max_iters=20",
            f'dataset.cubes=["{tmp_path}/cube*.hsib"]',
            "dataset.slice_size=16",
            "dataset.slice_stride=16",
        ]
        payloads = {}
        for workers, run_dir in ((1, "seq"), (3, "par")):
            cfg = load_config(
                None,
                base
                + [
                    f'experiment.out_dir="{tmp_path}/{run_dir}"',
                    f"experiment.workers={workers}",
                ],
            )
            pipeline.cmd_gen_speckles(cfg)
            pipeline.cmd_slice(cfg)
            pipeline.cmd_measure(cfg)
            pipeline.cmd_reconstruct(cfg)
            root = cfg.out_path()
            payloads[run_dir] = {
                str(p.relative_to(root)): p.read_bytes()
                for p in sorted(root.rglob("*.hsib"))
            }
        assert payloads["seq"] == payloads["par"]
