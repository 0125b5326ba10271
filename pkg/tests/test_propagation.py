import numpy as np
import pytest

from voxloop.errors import BackendError
from voxloop.phantoms import lesion_phantom, noise_slab_phantom
from voxloop.propagation import (
    PropagationConfig,
    PropagationReport,
    derive_seed_prompts,
    inter_slice_iou,
    propagate_bidirectional,
)
from voxloop.metrics import dice
from voxloop.segmenter import BuiltinSegmenter
from voxloop.volume import Volume

import oracles


# --- inter-slice IoU ------------------------------------------------------

def test_iou_identity_and_disjoint():
    a = np.zeros((6, 6), np.uint8)
    a[1:3, 1:3] = 1
    b = np.zeros((6, 6), np.uint8)
    b[4:6, 4:6] = 1
    assert inter_slice_iou(a, a) == 1.0
    assert inter_slice_iou(a, b) == 0.0


def test_iou_partial_overlap():
    a = np.zeros((4, 4), np.uint8)
    a[0, 0:4] = 1  # 4 px
    b = np.zeros((4, 4), np.uint8)
    b[0, 2:4] = 1
    b[1, 0:2] = 1  # 4 px, overlap 2
    assert inter_slice_iou(a, b) == pytest.approx(2 / 6)


def test_iou_both_empty_is_zero():
    z = np.zeros((3, 3), np.uint8)
    assert inter_slice_iou(z, z) == 0.0


def test_iou_dimension_mismatch():
    with pytest.raises(ValueError, match="shapes"):
        inter_slice_iou(np.zeros((3, 3)), np.zeros((4, 4)))


def test_iou_matches_bruteforce(rng):
    for _ in range(300):
        a = (rng.random((8, 8)) < 0.5).astype(np.uint8)
        b = (rng.random((8, 8)) < 0.5).astype(np.uint8)
        assert inter_slice_iou(a, b) == pytest.approx(oracles.iou_bruteforce(a, b), abs=1e-12)


# --- seed prompt derivation ----------------------------------------------

def test_prompts_square_center():
    mask = np.zeros((9, 9), np.uint8)
    mask[2:7, 2:7] = 1
    (p,) = derive_seed_prompts(mask, slice_index=4)
    assert (p.x, p.y) == (4, 4)
    assert p.polarity == "positive" and p.slice_index == 4


def test_prompts_one_per_component():
    mask = np.zeros((12, 12), np.uint8)
    mask[1:4, 1:4] = 1
    mask[7:11, 7:11] = 1
    prompts = derive_seed_prompts(mask, 0)
    assert len(prompts) == 2
    assert all(mask[p.y, p.x] for p in prompts)
    assert sorted(p.sequence for p in prompts) == [0, 1]


def test_prompts_c_shape_stays_inside():
    mask = np.zeros((9, 9), np.uint8)
    mask[1:8, 1:4] = 1   # left bar
    mask[1:3, 4:8] = 1   # top bar
    mask[6:8, 4:8] = 1   # bottom bar; centroid falls in the open mouth
    (p,) = derive_seed_prompts(mask, 0)
    assert mask[p.y, p.x] == 1
    comps = oracles.components_bfs(mask)
    assert len(comps) == 1
    pool = comps[0] & oracles.erode_bruteforce(mask)
    assert (p.y, p.x) == oracles.nearest_to_centroid(comps[0], pool or comps[0])


def test_prompts_thin_line_falls_back_to_members():
    mask = np.zeros((5, 9), np.uint8)
    mask[2, 1:8] = 1  # erosion wipes a 1 px line
    (p,) = derive_seed_prompts(mask, 0)
    assert (p.x, p.y) == (4, 2)


def test_prompts_empty_mask_rejected():
    with pytest.raises(ValueError, match="empty"):
        derive_seed_prompts(np.zeros((4, 4), np.uint8), 0)


def test_prompts_match_oracle_on_random_blobs(rng):
    for _ in range(50):
        mask = (rng.random((14, 14)) < 0.35).astype(np.uint8)
        if not mask.any():
            continue
        prompts = derive_seed_prompts(mask, 0)
        comps = oracles.components_bfs(mask)
        eroded = oracles.erode_bruteforce(mask)
        want = set()
        for comp in comps:
            pool = comp & eroded
            want.add(oracles.nearest_to_centroid(comp, pool or comp))
        assert {(p.y, p.x) for p in prompts} == want


# --- propagation runs -----------------------------------------------------

def run(plan, **config_kwargs):
    seed = plan.truth.get_plane(plan.seed_index)
    return propagate_bidirectional(
        plan.volume,
        plan.seed_index,
        seed,
        BuiltinSegmenter(),
        profile_for(plan),
        PropagationConfig(**config_kwargs),
    )


def profile_for(plan):
    from voxloop.profiles import TargetProfile

    return TargetProfile(
        name="lesion",
        intensity_range=(250.0, 350.0),
        min_area=4,
        grow_tolerance=60.0,
    )


def test_block_phantom_covers_exact_span():
    plan = lesion_phantom()
    masks, report = run(plan)
    assert np.array_equal(masks.bits, plan.truth.bits)
    assert report.halt_reasons == {"superior": "empty_mask", "inferior": "empty_mask"}
    lo, hi = plan.lesion_span
    covered = sorted([report.seed_slice_index] + [r.slice_index for r in report.accepted_records])
    assert covered == list(range(lo, hi + 1))


def test_emission_order_superior_then_inferior():
    plan = lesion_phantom(span=(5, 14))
    emitted = []
    seed = plan.truth.get_plane(plan.seed_index)
    masks, report = propagate_bidirectional(
        plan.volume, plan.seed_index, seed, BuiltinSegmenter(), profile_for(plan),
        PropagationConfig(), emit=lambda rec, m: emitted.append((rec, m.copy())),
    )
    # seed 9: superior visits 8,7,6,5 then inferior visits 10..14
    assert [r.slice_index for r, _ in emitted] == [8, 7, 6, 5, 10, 11, 12, 13, 14]
    assert [r.emitted_at for r, _ in emitted] == list(range(1, 10))
    assert [r.to_dict() for r, _ in emitted] == [r.to_dict() for r in report.accepted_records]
    sup = [r.emitted_at for r in report.accepted_records if r.direction == "superior"]
    inf = [r.emitted_at for r in report.accepted_records if r.direction == "inferior"]
    assert sup and inf and max(sup) < min(inf)
    for rec, mask in emitted:
        assert int(mask.sum()) == rec.mask_area


def test_seed_slice_mask_never_modified():
    plan = lesion_phantom()
    seed = plan.truth.get_plane(plan.seed_index)
    before = seed.copy()
    masks, _ = run(plan)
    assert np.array_equal(masks.get_plane(plan.seed_index), before)


def test_noise_slab_breaks_at_predicted_slice(rng):
    for trial in range(10):
        plan = noise_slab_phantom(np.random.default_rng(1000 + trial))
        masks, report = run(plan)
        assert report.halt_reasons == plan.halt_reasons
        discarded = [r for r in report.records if not r.accepted and r.direction == plan.break_direction]
        assert len(discarded) == 1
        assert discarded[0].slice_index == plan.break_slice
        assert discarded[0].mask_area == plan.patch_area
        assert 0.0 < discarded[0].iou_vs_previous < 0.3
        assert np.array_equal(masks.bits, plan.truth.bits)


def test_break_off_floods_slab_and_hurts_dice(rng):
    plan = noise_slab_phantom(rng)
    masks_on, _ = run(plan, break_enabled=True)
    masks_off, report_off = run(plan, break_enabled=False)
    slab_lo, slab_hi = plan.slab_span
    for k in range(slab_lo, slab_hi + 1):
        assert masks_off.get_plane(k).sum() == plan.patch_area
    assert dice(masks_on, plan.truth) > dice(masks_off, plan.truth)
    assert "iou_break" not in report_off.halt_reasons.values()


def test_on_off_runs_identical_before_break(rng):
    plan = noise_slab_phantom(rng)
    _, on = run(plan, break_enabled=True)
    _, off = run(plan, break_enabled=False)
    direction = plan.break_direction
    on_accepted = [(r.slice_index, r.mask_area) for r in on.accepted_records
                   if r.direction == direction]
    off_accepted = [(r.slice_index, r.mask_area) for r in off.accepted_records
                    if r.direction == direction]
    assert off_accepted[: len(on_accepted)] == on_accepted
    assert len(off_accepted) > len(on_accepted)


def test_accepted_pairs_respect_threshold(rng):
    for trial in range(10):
        plan = noise_slab_phantom(np.random.default_rng(2000 + trial))
        _, report = run(plan)
        for r in report.accepted_records:
            assert r.iou_vs_previous >= 0.3


def test_volume_boundary_halt():
    arr = np.zeros((10, 10, 6), np.float32)
    arr[3:7, 3:7, :] = 300.0  # lesion touches both ends of the stack
    vol = Volume(intensities=arr, spacing=(1, 1, 1))
    seed = np.zeros((10, 10), np.uint8)
    seed[3:7, 3:7] = 1
    masks, report = propagate_bidirectional(
        vol, 3, seed, BuiltinSegmenter(), profile_for(None), PropagationConfig()
    )
    assert report.halt_reasons == {"superior": "volume_boundary", "inferior": "volume_boundary"}
    assert masks.voxel_count == 16 * 6


def test_step_limit_halt():
    plan = lesion_phantom(span=(2, 17), dims=(24, 24, 20))
    masks, report = run(plan, max_steps_per_direction=2)
    assert report.halt_reasons == {"superior": "step_limit", "inferior": "step_limit"}
    assert len(report.accepted_records) == 4


def test_single_direction_config():
    plan = lesion_phantom()
    masks, report = run(plan, directions="inferior")
    assert set(report.halt_reasons) == {"inferior"}
    lo, hi = plan.lesion_span
    covered = sorted([plan.seed_index] + [r.slice_index for r in report.accepted_records])
    assert covered == list(range(plan.seed_index, hi + 1))


def test_backend_error_keeps_partial_results():
    plan = lesion_phantom(span=(5, 14))

    class Flaky(BuiltinSegmenter):
        def refine(self, image, current, prompts, profile):
            if image.slice_index == 12:
                raise BackendError("backend fell over")
            return super().refine(image, current, prompts, profile)

    seed = plan.truth.get_plane(plan.seed_index)
    masks, report = propagate_bidirectional(
        plan.volume, plan.seed_index, seed, Flaky(), profile_for(plan), PropagationConfig()
    )
    assert report.halt_reasons["inferior"] == "backend_error"
    assert report.halt_reasons["superior"] == "empty_mask"
    assert report.error == "backend fell over"
    assert masks.get_plane(11).sum() > 0  # work before the failure is kept
    assert masks.get_plane(12).sum() == 0


def test_invalid_seeds_rejected():
    plan = lesion_phantom()
    seed = plan.truth.get_plane(plan.seed_index)
    backend = BuiltinSegmenter()
    with pytest.raises(ValueError, match="range"):
        propagate_bidirectional(plan.volume, 99, seed, backend, profile_for(plan))
    with pytest.raises(ValueError, match="empty"):
        propagate_bidirectional(plan.volume, 9, np.zeros_like(seed), backend, profile_for(plan))
    with pytest.raises(ValueError, match="shape"):
        propagate_bidirectional(plan.volume, 9, np.zeros((3, 3)), backend, profile_for(plan))


def test_report_roundtrips_through_dict():
    plan = lesion_phantom()
    _, report = run(plan)
    back = PropagationReport.from_dict(report.to_dict())
    assert back.to_dict() == report.to_dict()
