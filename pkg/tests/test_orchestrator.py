import numpy as np
import pytest

from docknav.config import RunConfig
from docknav.nn import CheckpointError
from docknav.orchestrator import (
    ParameterSnapshot,
    Trainer,
    actor_from_checkpoint,
    restore_checkpoint,
    save_checkpoint,
)
from docknav.world import DollySpec, RobotSpec

TINY_ROBOT = RobotSpec(lidar_beams_per_sensor=8, semantic_rays=4)


def tiny_config(**overrides):
    base = dict(
        variant="navacl_q", seeds=(1,), episode_budget=5, workers=1,
        updates_per_episode=2, replay_capacity=1024, dtype="float64",
        step_limit=20, batch_size=16, hidden=(16,), candidate_pool=4,
        result_batch_size=4, obstacle_count_min=0, obstacle_count_max=2,
        distance_min=1.5, distance_max=3.0, target_update_interval=50,
    )
    base.update(overrides)
    return RunConfig(**base)


def make_trainer(seed=1, out_dir=None, **overrides):
    return Trainer(tiny_config(**overrides), seed=seed, out_dir=out_dir,
                   robot=TINY_ROBOT)


def actor_bytes(trainer):
    return b"".join(p.tobytes() for p in trainer.learner.actor.net.parameters())


# -- synchronous determinism ---------------------------------------------------


def test_sync_mode_bit_reproducible(tmp_path):
    digests = []
    telemetry = []
    for run in range(2):
        out = tmp_path / f"run{run}"
        trainer = make_trainer(out_dir=out)
        trainer.train()
        digests.append(actor_bytes(trainer))
        telemetry.append((out / "telemetry.csv").read_text())
    assert digests[0] == digests[1]
    assert telemetry[0] == telemetry[1]


def test_single_worker_episode_reproducible():
    from docknav.orchestrator import Worker

    episodes = []
    for _ in range(2):
        trainer = make_trainer()
        worker = Worker(0, trainer.seed, trainer)
        episodes.append(worker.produce_episode(trainer.snapshots.latest()))
    a, b = episodes
    assert np.array_equal(a.observations, b.observations)
    assert np.array_equal(a.actions, b.actions)
    assert np.array_equal(a.rewards, b.rewards)
    assert a.task_type == b.task_type


def test_sync_alternation_counters():
    trainer = make_trainer(episode_budget=8, updates_per_episode=3, batch_size=8)
    trainer.train()
    assert trainer.episodes_received == 8
    # updates owed = episodes * 3 minus the debt accrued while the buffer was
    # below one batch
    assert trainer.learner.n_updates + trainer.pending_updates == 8 * 3
    assert trainer.learner.n_updates > 0


# -- distribution -----------------------------------------------------------------


def test_async_workers_all_deliver_and_counts_conserved(tmp_path):
    out = tmp_path / "async"
    trainer = make_trainer(out_dir=out, workers=4, episode_budget=24,
                           updates_per_episode=1, batch_size=8)
    trainer.train()
    assert trainer.episodes_received >= 24
    # count conservation between episode completion and PER insertion
    assert trainer.replay.inserted_total == trainer.transitions_received
    # every worker contributed and is visible in the buffer
    seen = set(trainer.replay.worker_ids[: len(trainer.replay)].tolist())
    assert seen == {0, 1, 2, 3}
    telemetry = (out / "telemetry.csv").read_text().strip().splitlines()[1:]
    rows = [line.split(",") for line in telemetry]
    assert len(rows) == trainer.episodes_received
    assert sum(int(r[3]) for r in rows) == trainer.transitions_received
    assert {int(r[1]) for r in rows} == {0, 1, 2, 3}


def test_snapshot_versions_non_decreasing_per_worker(tmp_path):
    out = tmp_path / "versions"
    trainer = make_trainer(out_dir=out, workers=3, episode_budget=18,
                           updates_per_episode=1, batch_size=8)
    trainer.train()
    telemetry = (out / "telemetry.csv").read_text().strip().splitlines()[1:]
    per_worker = {}
    for line in telemetry:
        parts = line.split(",")
        per_worker.setdefault(int(parts[1]), []).append(int(parts[6]))
    for versions in per_worker.values():
        assert versions == sorted(versions)


def test_snapshots_are_immutable():
    trainer = make_trainer()
    snap = trainer.snapshots.latest()
    assert isinstance(snap, ParameterSnapshot)
    with pytest.raises(ValueError):
        snap.actor_params[0][...] = 1.0


def test_idle_when_buffer_below_batch():
    trainer = make_trainer(batch_size=4096)
    assert trainer.run_update() is False
    assert trainer.learner.n_updates == 0


def test_fpi_batch_flush():
    trainer = make_trainer(episode_budget=9, result_batch_size=4, batch_size=8)
    trainer.train()
    assert trainer.fpi_train_calls == 2  # 9 results: two full batches of 4
    assert len(trainer.result_set) == 1
    trainer.flush_fpi_results()
    assert trainer.fpi_train_calls == 3
    assert not trainer.result_set


def test_random_starts_variant_bypasses_curriculum(tmp_path):
    out = tmp_path / "rnd"
    trainer = make_trainer(out_dir=out, variant="random_starts", episode_budget=6,
                           batch_size=8)
    trainer.train()
    assert trainer.fpi_train_calls == 0
    rows = (out / "curriculum.csv").read_text().strip().splitlines()[1:]
    assert all(row.split(",")[1] == "random" for row in rows)
    assert all(row.split(",")[7] == "" for row in rows)  # no f_pi prediction


# -- checkpointing -----------------------------------------------------------------


def test_checkpoint_roundtrip_bitwise(tmp_path):
    trainer = make_trainer(episode_budget=4, batch_size=8)
    trainer.train()
    path = tmp_path / "state.ckpt"
    save_checkpoint(trainer, path)
    restored = restore_checkpoint(path, tiny_config(episode_budget=4, batch_size=8))
    assert actor_bytes(trainer) == actor_bytes(restored)
    for a, b in zip(trainer.learner.critics.q1.parameters(),
                    restored.learner.critics.q1.parameters()):
        assert np.array_equal(a, b)
    assert restored.learner.n_updates == trainer.learner.n_updates
    assert restored.episodes_received == trainer.episodes_received
    assert len(restored.replay) == len(trainer.replay)
    assert np.array_equal(restored.replay.tree.nodes, trainer.replay.tree.nodes)


def test_restore_then_updates_matches_uninterrupted(tmp_path):
    # reference: train 4 episodes, then 10 more updates
    ref = make_trainer(episode_budget=4, batch_size=8)
    ref.train()
    path = tmp_path / "mid.ckpt"
    save_checkpoint(ref, path)
    for _ in range(10):
        assert ref.run_update()

    resumed = restore_checkpoint(path, tiny_config(episode_budget=4, batch_size=8))
    for _ in range(10):
        assert resumed.run_update()
    assert actor_bytes(ref) == actor_bytes(resumed)
    assert np.array_equal(ref.replay.tree.nodes, resumed.replay.tree.nodes)


def test_resume_training_matches_uninterrupted(tmp_path):
    # uninterrupted: 6 episodes in one go
    full = make_trainer(episode_budget=6, batch_size=8)
    full.train()
    # interrupted: 3 episodes, checkpoint, restore, 3 more
    first = make_trainer(episode_budget=6, batch_size=8)
    first.train(max_new_episodes=3)
    path = tmp_path / "resume.ckpt"
    save_checkpoint(first, path)
    second = restore_checkpoint(path, tiny_config(episode_budget=6, batch_size=8))
    second.train()
    assert second.episodes_received == 6
    assert actor_bytes(full) == actor_bytes(second)


def test_corrupted_checkpoint_rejected(tmp_path):
    trainer = make_trainer(episode_budget=2, batch_size=8)
    trainer.train()
    path = tmp_path / "c.ckpt"
    save_checkpoint(trainer, path)
    blob = bytearray(path.read_bytes())
    blob[100] ^= 0x55
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError):
        restore_checkpoint(path, tiny_config())


def test_structural_mismatch_rejected(tmp_path):
    trainer = make_trainer(episode_budget=2, batch_size=8)
    trainer.train()
    path = tmp_path / "s.ckpt"
    save_checkpoint(trainer, path)
    with pytest.raises(CheckpointError, match="mismatch"):
        restore_checkpoint(path, tiny_config(hidden=(24,)))


def test_actor_from_checkpoint_matches(tmp_path):
    trainer = make_trainer(episode_budget=2, batch_size=8)
    trainer.train()
    path = tmp_path / "a.ckpt"
    save_checkpoint(trainer, path)
    actor = actor_from_checkpoint(path, dtype=np.float64)
    obs = np.random.default_rng(0).uniform(0, 1, trainer.obs_dim)
    a1, _ = trainer.learner.actor.act(obs, mode="mean")
    a2, _ = actor.act(obs, mode="mean")
    assert np.allclose(a1, a2, atol=1e-12)
