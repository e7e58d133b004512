import dataclasses

import numpy as np
import pytest

from eventface import checkpoint as ckpt
from eventface.backbone import BackboneConfig
from eventface.data import make_synthetic_dataset
from eventface.model import (
    EventFaceModel,
    ModelConfig,
    UnmergedCheckpointError,
    check_merged,
    extract_embedding,
    set_stage,
)
from eventface.train import TrainConfig, pretrain_backbone, train_stage1, train_stage2

TINY_BB = BackboneConfig(stage_channels=(8, 16), blocks_per_stage=1, input_hw=16, embed_dim=8)
TINY = ModelConfig(TINY_BB, num_frames=3, lora_rank=2)
TINY_TRAIN = TrainConfig(
    lr=0.01, batch_size=4, epochs_stage1=1, epochs_stage2=1, pretrain_ids=3,
    pretrain_images_per_id=2, pretrain_epochs=1,
)


@pytest.fixture(scope="module")
def tiny_data():
    return make_synthetic_dataset(3, 3, seed=0, test_ids=1, num_frames=3, target_hw=16)


@pytest.fixture(scope="module")
def stage1(tiny_data):
    return train_stage1(tiny_data.subset("train"), TINY_TRAIN, pretrain_backbone(TINY, TINY_TRAIN))


def test_stage1_output_is_merged(stage1):
    state = stage1.checkpoint()
    check_merged(state)
    assert not any(k.startswith(("mpe.", "stm.")) for k in state)
    assert len(stage1.log) == 2  # 6 sequences, batch 4


def test_stage1_only_adapters_and_head_move(tiny_data):
    model = pretrain_backbone(TINY, TINY_TRAIN)
    embed = model.backbone.embed.data.copy()
    set_stage(model, "stage1")
    trainable = {id(t) for t in model.trainable_parameters()}
    assert trainable == {id(t) for t in model.backbone.adapter_parameters()} | {id(model.head.weight)}
    result = train_stage1(tiny_data.subset("train"), TINY_TRAIN, model)
    assert result.model is model
    assert np.array_equal(model.backbone.embed.data, embed)


def test_stage2_freezes_backbone(stage1, tiny_data):
    s1 = stage1.checkpoint()
    r2 = train_stage2(s1, tiny_data.subset("train"), TINY_TRAIN, TINY)
    s2 = r2.checkpoint()
    for k, v in s1.items():
        if k.startswith("backbone."):
            assert np.array_equal(s2[k], v), k
    assert any(k.startswith("mpe.stage0.") for k in s2)
    assert any(k.startswith("stm.stage1.") for k in s2)


def test_stage2_rejects_unmerged(tiny_data):
    model = pretrain_backbone(TINY, TINY_TRAIN)
    set_stage(model, "stage1")
    with pytest.raises(UnmergedCheckpointError):
        train_stage2(model.state(), tiny_data.subset("train"), TINY_TRAIN, TINY)


def test_checkpoint_reload_reproduces_embeddings(stage1, tiny_data):
    r2 = train_stage2(stage1.checkpoint(), tiny_data.subset("train"), TINY_TRAIN, TINY)
    blob = ckpt.dumps(r2.checkpoint())
    fresh = EventFaceModel(TINY, num_ids=2, seed=99)
    fresh.load_state(ckpt.loads(blob))
    test = tiny_data.subset("test")
    a = extract_embedding(test.frames, r2.model)
    b = extract_embedding(test.frames, fresh)
    assert np.array_equal(a, b)
    np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0)


def test_training_is_deterministic(tiny_data):
    train = tiny_data.subset("train")
    a = train_stage1(train, TINY_TRAIN, pretrain_backbone(TINY, TINY_TRAIN)).checkpoint()
    b = train_stage1(train, TINY_TRAIN, pretrain_backbone(TINY, TINY_TRAIN)).checkpoint()
    assert ckpt.dumps(a) == ckpt.dumps(b)


def test_single_sequence_embedding(stage1, tiny_data):
    e = extract_embedding(tiny_data.frames[0], stage1.model)
    assert e.shape == (8,)


def test_arrangement_changes_stage2_output(stage1, tiny_data):
    embs = []
    for arrangement in ("interleaved", "sequential"):
        cfg = dataclasses.replace(TINY, arrangement=arrangement, stm_out_std=0.5)
        model = EventFaceModel(cfg, num_ids=2, seed=0)
        model.load_state(stage1.checkpoint())
        set_stage(model, "stage2")
        embs.append(extract_embedding(tiny_data.frames[:2], model))
    assert not np.allclose(embs[0], embs[1])


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=0.0)
    with pytest.raises(ValueError):
        TrainConfig(epochs_stage1=-1)


def test_reference_schedule():
    ref = TrainConfig.reference()
    assert (ref.lr, ref.batch_size, ref.epochs_stage1, ref.epochs_stage2) == (5e-5, 80, 60, 20)
    assert TINY.margin == 0.5 and TINY.scale == 32.0


def test_frame_order_sensitivity(stage1, tiny_data):
    frames = tiny_data.frames[:2]
    shuffled = frames[:, ::-1].copy()
    # stage 1: frames are pooled, so order is irrelevant up to rounding
    np.testing.assert_allclose(
        extract_embedding(frames, stage1.model), extract_embedding(shuffled, stage1.model), atol=1e-12
    )
    cfg = dataclasses.replace(TINY, stm_out_std=0.5)
    model = EventFaceModel(cfg, num_ids=2, seed=0)
    model.load_state(stage1.checkpoint())
    set_stage(model, "stage2")
    assert not np.allclose(extract_embedding(frames, model), extract_embedding(shuffled, model))
