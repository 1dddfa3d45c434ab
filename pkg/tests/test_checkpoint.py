import numpy as np
import pytest
import torch

from sketchdiff.checkpoint import (
    content_hash,
    Checkpoint,
    CheckpointError,
    file_sha256,
    load_checkpoint,
    save_checkpoint,
)
from sketchdiff.config import TOY_ARCH
from sketchdiff.unet import UNetConfig, init_unet


def small_ckpt() -> Checkpoint:
    return Checkpoint(
        meta={"stage": 1, "note": "fixture", "schedule": {"T": 10}},
        blocks={
            "unet/w": np.arange(12, dtype=np.float32).reshape(3, 4),
            "unet/b": np.array([1.5, -2.25], dtype=np.float32),
            "tau/scalar": np.array([7.0], dtype=np.float32),
        },
    )


class TestRoundTrip:
    def test_save_load_preserves_everything(self, tmp_path):
        ckpt = small_ckpt()
        save_checkpoint(ckpt, tmp_path / "a.ckpt")
        back = load_checkpoint(tmp_path / "a.ckpt")
        assert back.meta == ckpt.meta
        assert set(back.blocks) == set(ckpt.blocks)
        for name in ckpt.blocks:
            assert np.array_equal(back.blocks[name], ckpt.blocks[name])
            assert back.blocks[name].dtype == np.float32

    def test_save_load_save_byte_identical(self, tmp_path):
        ckpt = small_ckpt()
        save_checkpoint(ckpt, tmp_path / "a.ckpt")
        save_checkpoint(load_checkpoint(tmp_path / "a.ckpt"), tmp_path / "b.ckpt")
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()

    def test_block_insertion_order_does_not_matter(self, tmp_path):
        a = small_ckpt()
        b = Checkpoint(meta=a.meta, blocks=dict(reversed(list(a.blocks.items()))))
        save_checkpoint(a, tmp_path / "a.ckpt")
        save_checkpoint(b, tmp_path / "b.ckpt")
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


class TestErrors:
    def test_not_a_checkpoint(self, tmp_path):
        p = tmp_path / "junk.ckpt"
        p.write_bytes(b"PK\x03\x04 definitely a zip")
        with pytest.raises(CheckpointError, match="not a checkpoint"):
            load_checkpoint(p)

    def test_version_mismatch(self, tmp_path):
        p = tmp_path / "a.ckpt"
        save_checkpoint(small_ckpt(), p)
        raw = bytearray(p.read_bytes())
        raw[4] = 99
        p.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="version 99"):
            load_checkpoint(p)

    def test_truncated_block_names_the_block(self, tmp_path):
        p = tmp_path / "a.ckpt"
        save_checkpoint(small_ckpt(), p)
        raw = p.read_bytes()
        p.write_bytes(raw[:-6])  # cut into the last block's payload
        with pytest.raises(CheckpointError, match="block unet/w is truncated"):
            load_checkpoint(p)  # blocks sorted: tau/scalar, unet/b, unet/w

    def test_trailing_bytes_rejected(self, tmp_path):
        p = tmp_path / "a.ckpt"
        save_checkpoint(small_ckpt(), p)
        p.write_bytes(p.read_bytes() + b"\x00\x00\x00\x00")
        with pytest.raises(CheckpointError, match="trailing bytes"):
            load_checkpoint(p)

    def test_corrupt_header(self, tmp_path):
        p = tmp_path / "a.ckpt"
        save_checkpoint(small_ckpt(), p)
        raw = bytearray(p.read_bytes())
        raw[14] = 0xFF  # stomp inside the JSON header
        p.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError):
            load_checkpoint(p)

    def test_atomicity_no_partial_file_on_failure(self, tmp_path):
        target = tmp_path / "sub" / "a.ckpt"
        with pytest.raises(FileNotFoundError):
            save_checkpoint(small_ckpt(), target)  # parent dir missing
        assert not target.exists()
        assert list(tmp_path.glob("*.tmp")) == []


class TestModuleBlocks:
    def test_module_round_trip(self, tmp_path):
        cfg = UNetConfig(base_width=4, depth=1, time_embed_dim=8)
        net = init_unet(cfg, 3)
        ckpt = Checkpoint(meta={"arch": "tiny"})
        ckpt.add_module("unet", net)
        save_checkpoint(ckpt, tmp_path / "m.ckpt")

        net2 = init_unet(cfg, 4)
        assert any(
            not torch.equal(a, b) for a, b in zip(net.parameters(), net2.parameters())
        )
        load_checkpoint(tmp_path / "m.ckpt").load_module("unet", net2)
        for a, b in zip(net.parameters(), net2.parameters()):
            assert torch.equal(a, b)

    def test_missing_block_named(self):
        cfg = UNetConfig(base_width=4, depth=1, time_embed_dim=8)
        ckpt = Checkpoint()
        ckpt.add_module("unet", init_unet(cfg, 0))
        del ckpt.blocks["unet/head.bias"]
        with pytest.raises(CheckpointError, match="unet/head.bias"):
            ckpt.load_module("unet", init_unet(cfg, 1))

    def test_group_names(self):
        ckpt = small_ckpt()
        assert ckpt.group_names() == {"unet", "tau"}


class TestOptimizerBlocks:
    def test_adam_state_round_trip_preserves_trajectory(self, tmp_path):
        cfg = UNetConfig(base_width=4, depth=1, time_embed_dim=8)
        torch.manual_seed(0)
        z = torch.randn(2, 3, 4, 4)
        c = torch.randn(2, 8, 4, 4)
        target = torch.randn(2, 3, 4, 4)

        def step(net, opt):
            loss = torch.mean((net(z, torch.tensor([1, 2]), c) - target) ** 2)
            opt.zero_grad()
            loss.backward()
            opt.step()
            return loss.item()

        # run A: five uninterrupted steps
        net_a = init_unet(cfg, 7)
        opt_a = torch.optim.Adam(net_a.parameters(), lr=1e-3)
        losses_a = [step(net_a, opt_a) for _ in range(5)]

        # run B: three steps, checkpoint, restore into fresh objects, two more
        net_b = init_unet(cfg, 7)
        opt_b = torch.optim.Adam(net_b.parameters(), lr=1e-3)
        for _ in range(3):
            step(net_b, opt_b)
        ckpt = Checkpoint()
        ckpt.add_module("unet", net_b)
        ckpt.add_optimizer("optim/unet", opt_b)
        save_checkpoint(ckpt, tmp_path / "r.ckpt")

        net_c = init_unet(cfg, 99)
        opt_c = torch.optim.Adam(net_c.parameters(), lr=1e-3)
        loaded = load_checkpoint(tmp_path / "r.ckpt")
        loaded.load_module("unet", net_c)
        loaded.load_optimizer("optim/unet", opt_c)
        losses_c = [step(net_c, opt_c) for _ in range(2)]

        assert losses_c == pytest.approx(losses_a[3:], abs=0)
        for a, b in zip(net_a.parameters(), net_c.parameters()):
            assert torch.equal(a, b)


class TestHash:
    def test_sha256_matches_hashlib(self, tmp_path):
        import hashlib

        p = tmp_path / "a.ckpt"
        save_checkpoint(small_ckpt(), p)
        assert file_sha256(p) == hashlib.sha256(p.read_bytes()).hexdigest()


class TestContentHash:
    def test_matches_file_hash_after_save(self, tmp_path):
        ckpt = Checkpoint(meta={"k": 1})
        ckpt.blocks["a/w"] = np.arange(12, dtype=np.float32).reshape(3, 4)
        ckpt.blocks["b/v"] = np.array([2.5], dtype=np.float32)
        path = tmp_path / "c.ckpt"
        save_checkpoint(ckpt, path)
        assert content_hash(ckpt) == file_sha256(path)

    def test_sensitive_to_meta_and_blocks(self):
        base = Checkpoint(meta={"k": 1})
        base.blocks["a/w"] = np.zeros(3, dtype=np.float32)
        other_meta = Checkpoint(meta={"k": 2}, blocks=dict(base.blocks))
        other_block = Checkpoint(meta={"k": 1})
        other_block.blocks["a/w"] = np.ones(3, dtype=np.float32)
        assert content_hash(base) != content_hash(other_meta)
        assert content_hash(base) != content_hash(other_block)
