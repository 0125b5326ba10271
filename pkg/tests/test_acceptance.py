"""Acceptance gate: one test per shipping criterion.

Each test asserts the full criterion at its stated tolerance and runtime
budget, against the independent oracles in tests/oracles.py where the
expected value is derived rather than asserted directly.
"""

import time

import numpy as np
import pytest

import oracles
from voxloop.client import InProcessTransport, ScriptedClient
from voxloop.meshing import (
    is_watertight,
    mask_to_mesh,
    read_obj,
    scale_mesh,
    signed_volume,
    write_obj,
)
from voxloop.metrics import (
    SmoothingState,
    TrialRecord,
    composite_scores,
    dice,
    smooth_direction,
    tlx_scale,
)
from voxloop.phantoms import demo_volume, ellipsoid_phantom, lesion_phantom, noise_slab_phantom
from voxloop.profiles import ProfileSet, TargetProfile
from voxloop.propagation import (
    PropagationConfig,
    inter_slice_iou,
    propagate_bidirectional,
)
from voxloop.retrieval import (
    HistogramEmbedding,
    ReferenceRecord,
    build_index,
    contrastive_retrieve,
    index_volume_slices,
    knn_search,
)
from voxloop.segmenter import BuiltinSegmenter
from voxloop.service import ServiceConfig, create_app
from voxloop.session import read_events, replay_events
from voxloop.volume import load_mask, load_volume, save_mask, save_volume


def test_01_mask_metrics_match_voxel_counting_brute_force():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    assert dice(np.zeros((8, 8), np.uint8), np.zeros((8, 8), np.uint8)) == 1.0
    assert inter_slice_iou(np.zeros((8, 8), np.uint8), np.zeros((8, 8), np.uint8)) == 0.0
    for _ in range(1000):
        density_a, density_b = rng.uniform(0.0, 1.0, size=2)
        a = (rng.random((8, 8)) < density_a).astype(np.uint8)
        b = (rng.random((8, 8)) < density_b).astype(np.uint8)
        assert dice(a, b) == oracles.dice_bruteforce(a, b)
        assert inter_slice_iou(a, b) == oracles.iou_bruteforce(a, b)
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0, f"metric oracle sweep took {elapsed:.2f}s"


def test_02_direction_smoothing_blend_and_convergence():
    state = SmoothingState(previous_direction=(1.0, 0.0, 0.0), alpha=0.2)
    raw = smooth_direction(state, (0.0, 1.0, 0.0), renormalize=False)
    assert np.allclose(raw, (0.8, 0.2, 0.0), atol=1e-9)

    state = SmoothingState(previous_direction=(1.0, 0.0, 0.0), alpha=0.2)
    target = np.array([0.0, 1.0, 0.0])
    for _ in range(50):
        smoothed = smooth_direction(state, target)
    assert oracles.angle_between(smoothed, target) < 0.01


def test_03_iou_break_ablation_on_noise_slab_phantoms(lesion_profile):
    start = time.perf_counter()
    strictly_better = 0
    n_phantoms = 24
    for seed in range(n_phantoms):
        plan = noise_slab_phantom(np.random.default_rng(3000 + seed))
        seed_mask = plan.truth.get_plane(plan.seed_index)
        masks_on, report_on = propagate_bidirectional(
            plan.volume,
            plan.seed_index,
            seed_mask,
            BuiltinSegmenter(),
            lesion_profile,
            config=PropagationConfig(break_enabled=True),
        )
        masks_off, _ = propagate_bidirectional(
            plan.volume,
            plan.seed_index,
            seed_mask,
            BuiltinSegmenter(),
            lesion_profile,
            config=PropagationConfig(break_enabled=False),
        )
        dice_on = dice(masks_on, plan.truth)
        dice_off = dice(masks_off, plan.truth)
        assert dice_on >= dice_off, f"seed {seed}: break made Dice worse"
        if dice_on > dice_off:
            strictly_better += 1
        # the guarded run must halt for the construction-predicted reason,
        # at the construction-predicted step
        assert report_on.halt_reasons[plan.break_direction] == "iou_break"
        discarded = [r for r in report_on.records if not r.accepted and r.mask_area > 0]
        assert len(discarded) == 1
        assert discarded[0].slice_index == plan.break_slice
        assert discarded[0].direction == plan.break_direction
        assert discarded[0].iou_vs_previous < 0.3
    assert strictly_better >= 0.9 * n_phantoms
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0, f"ablation sweep took {elapsed:.2f}s"


def test_04_emission_order_matches_report_on_fuzzed_phantoms(lesion_profile):
    rng = np.random.default_rng(404)
    for trial in range(100):
        if trial % 2 == 0:
            nz = int(rng.integers(12, 30))
            lo = int(rng.integers(1, nz // 2))
            hi = int(rng.integers(nz // 2, nz - 1))
            size = int(rng.integers(4, 10))
            plan = lesion_phantom(
                dims=(20, 20, nz),
                span=(lo, hi),
                block_xy=(int(rng.integers(0, 20 - size)), int(rng.integers(0, 20 - size))),
                block_size=size,
            )
        else:
            plan = noise_slab_phantom(rng)
        emitted = []
        masks, report = propagate_bidirectional(
            plan.volume,
            plan.seed_index,
            plan.truth.get_plane(plan.seed_index),
            BuiltinSegmenter(),
            lesion_profile,
            emit=lambda record, mask: emitted.append(record),
        )
        accepted = report.accepted_records
        assert [r.slice_index for r in emitted] == [r.slice_index for r in accepted]
        assert [r.emitted_at for r in emitted] == [r.emitted_at for r in accepted]
        ordinals = [r.emitted_at for r in emitted]
        assert ordinals == sorted(ordinals)
        assert len(set(ordinals)) == len(ordinals)
        superior = [r.emitted_at for r in emitted if r.direction == "superior"]
        inferior = [r.emitted_at for r in emitted if r.direction == "inferior"]
        if superior and inferior:
            assert max(superior) < min(inferior)


def test_05_ellipsoid_mesh_watertight_volume_and_obj_round_trip(tmp_path):
    start = time.perf_counter()
    volume, truth = ellipsoid_phantom(
        dims=(32, 32, 16), semi_axes=(10.0, 10.0, 5.0), spacing=(0.5, 0.5, 1.0)
    )
    mesh = scale_mesh(mask_to_mesh(truth), volume.spacing)
    assert oracles.is_watertight(mesh.triangles)
    assert is_watertight(mesh)
    analytic = 4.0 / 3.0 * np.pi * 5.0 * 5.0 * 5.0  # mm, after spacing
    measured = signed_volume(mesh)
    assert abs(measured - analytic) / analytic < 0.05, f"{measured:.1f} vs {analytic:.1f} mm^3"

    path = tmp_path / "ellipsoid.obj"
    write_obj(mesh, path)
    back = read_obj(path)
    assert back.vertices.shape == mesh.vertices.shape
    assert back.triangles.shape == mesh.triangles.shape
    assert np.abs(back.vertices - mesh.vertices).max() < 1e-4
    assert np.array_equal(back.triangles, mesh.triangles)
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0, f"mesh criterion took {elapsed:.2f}s"


def test_06_knn_matches_brute_force_at_scale():
    rng = np.random.default_rng(606)
    start = time.perf_counter()
    n, dim = 10_000, 288
    vectors = rng.normal(size=(n, dim))
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    # exact duplicates force tie-breaks to matter
    for i in range(0, 50, 2):
        vectors[i + 1] = vectors[i]
    records = [
        ReferenceRecord(
            record_id=f"r{i:05d}",
            patient_id=f"p{i % 97}",
            slice_index=i % 40,
            has_pathology=bool(i % 2),
            vector=vectors[i].astype(np.float32),
        )
        for i in range(n)
    ]
    index = build_index(records)
    ids = [r.record_id for r in records]
    matrix = np.array([r.vector for r in records], dtype=np.float64)
    # queries aimed at duplicated vectors put exact score ties in the top-k
    tie_queries = [matrix[i] for i in range(0, 20, 2)]
    for hit_pair, query in enumerate(tie_queries):
        hits = knn_search(index, query.astype(np.float32), k=5)
        top_two = [h.record.record_id for h in hits[:2]]
        i = hit_pair * 2
        assert top_two == [f"r{i:05d}", f"r{i + 1:05d}"]
    for _ in range(100):
        query = rng.normal(size=dim)
        query /= np.linalg.norm(query)
        hits = knn_search(index, query.astype(np.float32), k=5)
        expected = oracles.knn_bruteforce(matrix, ids, query, k=5)
        assert [h.record.record_id for h in hits] == [rid for rid, _ in expected]

        positive, negative = contrastive_retrieve(index, query.astype(np.float32))
        assert positive.has_pathology is True
        assert negative.has_pathology is False
        assert positive.record_id == knn_search(index, query, k=1, label_filter=True)[0].record.record_id
        assert negative.record_id == knn_search(index, query, k=1, label_filter=False)[0].record.record_id
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0, f"retrieval criterion took {elapsed:.2f}s"


def test_07_composite_and_tlx_formulas():
    trials = [
        TrialRecord("t1", "a", accuracy=99.0, tlx_total=10.0, completion_time=100.0),
        TrialRecord("t2", "a", accuracy=98.0, tlx_total=20.0, completion_time=200.0),
        TrialRecord("t3", "b", accuracy=97.0, tlx_total=30.0, completion_time=300.0),
    ]
    result = composite_scores(trials)
    assert abs(result.composites["t1"] - 3.0) < 1e-12
    assert abs(result.composites["t2"] - 0.0) < 1e-12
    assert abs(result.composites["t3"] + 3.0) < 1e-12

    assert tlx_scale(1.0) == 0.0
    assert tlx_scale(21.0) == 100.0
    assert tlx_scale(11.0) == 50.0

    rng = np.random.default_rng(707)
    for _ in range(20):
        k = int(rng.integers(3, 9))
        base = [
            TrialRecord(
                f"t{i}",
                "p",
                accuracy=float(rng.uniform(10, 60)),
                tlx_total=float(rng.uniform(5, 55)),
                completion_time=float(rng.uniform(30, 600)),
            )
            for i in range(k)
        ]
        # shifting every trial equally in any input leaves z-scores alone
        uniform = [
            TrialRecord(
                t.trial_id,
                t.paradigm,
                accuracy=t.accuracy + 30.0,
                tlx_total=t.tlx_total + 40.0,
                completion_time=t.completion_time + 60.0,
            )
            for t in base
        ]
        a = composite_scores(base).composites
        b = composite_scores(uniform).composites
        for tid in a:
            assert abs(a[tid] - b[tid]) < 1e-9
        oracle = oracles.composites_bruteforce(
            [t.accuracy for t in base],
            [t.tlx_total for t in base],
            [t.completion_time for t in base],
        )
        got = composite_scores(base).composites
        for i, t in enumerate(base):
            assert abs(got[t.trial_id] - oracle[i]) < 1e-9


def test_08_headless_scripted_session_end_to_end(tmp_path):
    start = time.perf_counter()
    volume, truth = demo_volume()
    volumes_dir = tmp_path / "volumes"
    volumes_dir.mkdir()
    save_volume(volume, volumes_dir / "head.nii.gz")
    profiles = ProfileSet(
        [
            TargetProfile(
                name="brain tumor",
                synonyms=("brain lesion",),
                intensity_range=(250.0, 350.0),
                min_area=4,
                grow_tolerance=60.0,
            )
        ]
    )
    lesion_slices = [k for k in range(truth.dims[2]) if truth.bits[:, :, k].any()]
    records = index_volume_slices(
        volume,
        "demo",
        lesion_slices[:2],
        [0, 1],
        HistogramEmbedding(),
        source_tag="head",
    )
    config = ServiceConfig(
        profiles=profiles,
        data_dir=tmp_path / "data",
        volumes_dir=volumes_dir,
        index=build_index(records),
    )
    app = create_app(config)

    target_slice = lesion_slices[len(lesion_slices) // 2]
    ys, xs = np.nonzero(truth.get_plane(target_slice))
    px, py = int(xs[0]), int(ys[0])
    with ScriptedClient(InProcessTransport(app)) as client:
        opened = client.request("open_session", {"volume_ref": "head.nii.gz"})
        assert opened["kind"] == "open_session"
        sid = opened["payload"]["session_id"]
        assert opened["payload"]["state"] == "Explore"
        nav = client.request("navigate", {"slice_index": target_slice})
        assert nav["payload"]["active_slice"] == target_slice
        sub = client.request("submit_command", {"text": "show me the brain tumor"})
        assert sub["payload"]["parsed_target"] == "brain tumor"
        conf = client.request("confirm_command")
        assert conf["payload"]["seeded"] is True
        client.request("add_prompt", {"x": px, "y": py, "polarity": "negative"})
        refined = client.request("refine")
        assert refined["kind"] == "refine"
        client.request("add_prompt", {"x": px, "y": py, "polarity": "positive"})
        client.request("refine")
        done = client.request("propagate")
        assert done["kind"] == "propagation_done"
        assert done["payload"]["state"] == "Review"
        assert len(client.last_updates) == len(done["payload"]["accepted_slices"])

        challenge = client.request("complete")
        assert challenge["payload"]["confirmed"] is False
        assert "confirm" in challenge["payload"]["challenge"]
        finished = client.request("complete", {"confirm": True})
        assert finished["payload"]["state"] == "Completed"
        mesh = client.request("request_mesh", {"context_threshold": 500})
        assert mesh["payload"]["files"]["lesion"] == "lesion.obj"
        assert mesh["payload"]["volumes"]["lesion_mm3"] > 0

    session_dir = config.data_dir / sid
    persisted = load_mask(session_dir / "masks.nii.gz")
    assert persisted.target_name == "brain tumor"
    # bit-identical round-trip of the persisted mask
    save_mask(persisted, tmp_path / "again.nii.gz", spacing=volume.spacing)
    again = load_mask(tmp_path / "again.nii.gz")
    assert np.array_equal(again.bits, persisted.bits)
    # replaying the event log reproduces the mask bit for bit
    events = read_events(session_dir / "events.jsonl")
    replayed = replay_events(
        events,
        volume=load_volume(volumes_dir / "head.nii.gz"),
        profiles=profiles,
        backend=BuiltinSegmenter(),
    )
    assert replayed.state == "Completed"
    assert np.array_equal(replayed.masks.bits, persisted.bits)
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0, f"headless session took {elapsed:.2f}s"
