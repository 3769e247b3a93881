import json

import numpy as np
import pytest

import cascseg as cs
from cascseg import raster
from cascseg.cascade import CascadeConfig, purple_mask
from cascseg.matching import fit_ellipse
from cascseg.metrics import EvalMode, evaluate
from cascseg.synth import SceneParams, export_scene, generate, load_scene


class TestGenerate:
    def test_empty_scene(self):
        scene = generate(SceneParams(n_sperm=0, noise_speck_count=4), 3)
        assert scene.instances == []
        assert scene.image.shape == (540, 720, 3)

    def test_deterministic(self):
        params = SceneParams(n_sperm=3, overlap_bias=0.5)
        a = generate(params, 11)
        b = generate(params, 11)
        assert np.array_equal(a.image, b.image)
        for ia, ib in zip(a.instances, b.instances):
            assert np.array_equal(ia.full_mask, ib.full_mask)
            assert ia.control_points == ib.control_points

    def test_different_seeds_differ(self):
        params = SceneParams(n_sperm=2)
        assert not np.array_equal(generate(params, 1).image, generate(params, 2).image)

    def test_full_mask_is_union_and_connected(self, simple_scene):
        for inst in simple_scene.instances:
            assert np.array_equal(inst.full_mask, inst.head_mask | inst.tail_mask)
            assert raster.count_components(inst.full_mask, 8) == 1

    def test_heads_mostly_purple(self, simple_scene):
        purple = purple_mask(simple_scene.image, CascadeConfig())
        for inst in simple_scene.instances:
            assert (purple & inst.head_mask).sum() / inst.head_mask.sum() >= 0.95

    def test_tails_classify_single(self, simple_scene):
        for inst in simple_scene.instances:
            assert cs.classify(inst.tail_mask) is cs.MaskKind.SINGLE_TAIL

    def test_attachment_near_fitted_tip(self, simple_scene):
        for inst in simple_scene.instances:
            geo = fit_ellipse(inst.head_mask)
            best = min(
                np.hypot(tx - inst.attachment[0], ty - inst.attachment[1])
                for tx, ty in geo.major_axis_endpoints
            )
            assert best <= 2.0

    def test_overlap_bias_produces_crossings(self):
        # calibrated once on seeds 0..99 (87/100), frozen with margin
        hits = 0
        params = SceneParams(n_sperm=4, overlap_bias=1.0)
        for seed in range(40):
            scene = generate(params, seed)
            tails = [i.tail_mask for i in scene.instances]
            if any((tails[i] & tails[j]).any() for i in range(4) for j in range(i + 1, 4)):
                hits += 1
        assert hits >= 0.8 * 40

    def test_placement_failure_on_tiny_canvas(self):
        with pytest.raises(ValueError, match="placement failed"):
            generate(SceneParams(width=70, height=70, n_sperm=2), 0)

    def test_param_validation(self):
        with pytest.raises(ValueError):
            SceneParams(overlap_bias=1.5).validate()
        with pytest.raises(ValueError):
            SceneParams(n_sperm=-1).validate()


class TestExportImport:
    def test_round_trip(self, simple_scene, tmp_path):
        out = export_scene(simple_scene, tmp_path / "scene")
        loaded = load_scene(out)
        assert np.array_equal(loaded.image, simple_scene.image)
        assert len(loaded.instances) == len(simple_scene.instances)
        for a, b in zip(simple_scene.instances, loaded.instances):
            assert np.array_equal(a.head_mask, b.head_mask)
            assert np.array_equal(a.tail_mask, b.tail_mask)
            assert np.array_equal(a.full_mask, b.full_mask)
        assert loaded.seed == simple_scene.seed
        assert loaded.params == simple_scene.params

    def test_manifest_instance_count_and_rle(self, simple_scene, tmp_path):
        out = export_scene(simple_scene, tmp_path / "scene")
        with open(out / "gt.json") as fh:
            manifest = json.load(fh)
        assert len(manifest["instances"]) == simple_scene.params.n_sperm
        import base64

        for entry, inst in zip(manifest["instances"], simple_scene.instances):
            mask = raster.rle_decode(base64.b64decode(entry["rle"]))
            assert np.array_equal(mask, inst.full_mask)

    def test_self_evaluation_is_perfect(self, simple_scene):
        masks = [i.full_mask for i in simple_scene.instances]
        rep = evaluate(masks, list(masks), EvalMode.MATCHED_ONLY)
        assert rep.miou == 1.0 and rep.mdice == 1.0
