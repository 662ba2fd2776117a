"""Trainer and checkpoint tests: determinism, early stopping, file integrity."""

import numpy as np
import pytest

from probsaint.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from probsaint.errors import (
    ConfigurationError,
    IntegrityError,
    TrainingError,
    UnsupportedVersionError,
)
from probsaint.market import MarketSpec, generate, market_schema
from probsaint.metrics import mape_metric
from probsaint.model import MLPConfig, ModelConfig, predict_gaussian
from probsaint.pipeline import encode_rows, time_split
from probsaint.training import (
    SearchSpace,
    TrainConfig,
    data_fingerprint,
    random_search,
    sample_configs,
    train,
    validation_metric,
)


def tiny_market(n=260, seed=5):
    spec = MarketSpec.default(n_rows=n)
    rows = generate(spec, seed)
    schema = market_schema(spec)
    parts = time_split(rows, schema, "2022-05-20")
    return spec, schema, parts


def tiny_cfg(**kwargs) -> TrainConfig:
    base = dict(
        model=ModelConfig(d=8, depth=1, heads=2, dropout=0.0, context_batch_size=8),
        batch_size=16,
        max_epochs=3,
        patience=2,
        lr=1e-3,
        seed=11,
    )
    base.update(kwargs)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def market():
    return tiny_market()


class TestTrainLoop:
    def test_zero_lr_is_a_fixed_point(self, market):
        _, schema, parts = market
        ckpt, log = train(parts["train"], parts["val"], schema, tiny_cfg(lr=0.0, max_epochs=3))
        from probsaint.model import ProbSaintModel

        fresh = ProbSaintModel(
            ckpt.model_config, ckpt.encoders, ckpt.schema,
            rng=np.random.default_rng(np.random.SeedSequence(11).spawn(4)[0]),
        )
        for name, arr in ckpt.parameters.items():
            assert np.array_equal(arr, fresh.params[name].data), name
        vals = [e.val_metric for e in log.epochs]
        assert len(set(vals)) == 1

    def test_overfits_small_training_set(self, market):
        _, schema, parts = market
        rows = parts["train"][:64]
        cfg = tiny_cfg(max_epochs=200, patience=200, batch_size=16, lr=3e-3)
        ckpt, log = train(rows, parts["val"][:24], schema, cfg)
        assert log.epochs[-1].train_loss < log.epochs[0].train_loss

    def test_seeded_determinism(self, market):
        _, schema, parts = market
        _, log_a = train(parts["train"][:80], parts["val"][:20], schema, tiny_cfg())
        _, log_b = train(parts["train"][:80], parts["val"][:20], schema, tiny_cfg())
        assert log_a.trajectory() == log_b.trajectory()
        assert log_a.best_epoch == log_b.best_epoch

    def test_early_stopping_returns_best_epoch_weights(self, market):
        _, schema, parts = market
        cfg = tiny_cfg(max_epochs=12, patience=2, lr=5e-3)
        ckpt, log = train(parts["train"][:80], parts["val"][:30], schema, cfg)
        model = ckpt.build_model()
        val_batch, _ = encode_rows(parts["val"][:30], schema, ckpt.encoders, require_target=True)
        revalued = validation_metric(model, val_batch, "nll", cfg.batch_size)
        assert revalued == log.best_val
        assert log.best_val == min(e.val_metric for e in log.epochs)
        assert log.best_epoch <= len(log.epochs) - 1

    def test_empty_validation_rejected(self, market):
        _, schema, parts = market
        with pytest.raises(ConfigurationError, match="validation"):
            train(parts["train"][:40], [], schema, tiny_cfg())

    def test_oversized_batch_rejected(self, market):
        _, schema, parts = market
        with pytest.raises(ConfigurationError, match="batch_size"):
            train(parts["train"][:8], parts["val"][:8], schema, tiny_cfg(batch_size=64))

    def test_log_csv_columns(self, market):
        _, schema, parts = market
        _, log = train(parts["train"][:48], parts["val"][:16], schema, tiny_cfg(max_epochs=2))
        lines = log.to_csv().splitlines()
        assert lines[0] == "epoch,train_loss,val_nll,wall_ms"
        assert len(lines) == len(log.epochs) + 1

    def test_mse_objective_trains_point_head(self, market):
        _, schema, parts = market
        cfg = tiny_cfg(
            model=ModelConfig(d=8, depth=1, heads=2, dropout=0.0, head_outputs=1, context_batch_size=8),
            objective="mse",
            max_epochs=2,
        )
        ckpt, log = train(parts["train"][:64], parts["val"][:16], schema, cfg)
        assert ckpt.objective == "mse"
        assert all(np.isfinite(e.val_metric) for e in log.epochs)

    def test_objective_head_mismatch_rejected(self):
        with pytest.raises(ConfigurationError):
            tiny_cfg(objective="mse")  # default head has 2 outputs


class TestCheckpointFile:
    def _roundtrip(self, market, tmp_path):
        _, schema, parts = market
        ckpt, _ = train(parts["train"][:48], parts["val"][:16], schema, tiny_cfg(max_epochs=2))
        path = tmp_path / "model.ckpt"
        save_checkpoint(ckpt, path)
        return ckpt, path

    def test_round_trip_bit_identical(self, market, tmp_path):
        ckpt, path = self._roundtrip(market, tmp_path)
        loaded = load_checkpoint(path)
        assert set(loaded.parameters) == set(ckpt.parameters)
        for name, arr in ckpt.parameters.items():
            assert np.array_equal(arr, loaded.parameters[name]), name
        assert loaded.encoders == ckpt.encoders
        assert loaded.model_config == ckpt.model_config
        assert loaded.context_rows == ckpt.context_rows
        assert loaded.seed == ckpt.seed

    def test_round_trip_predictions_identical(self, market, tmp_path):
        _, schema, parts = market
        ckpt, path = self._roundtrip(market, tmp_path)
        loaded = load_checkpoint(path)
        query_rows = parts["test"][:3]
        ctx_a, _ = encode_rows(ckpt.context_rows, schema, ckpt.encoders)
        ctx_b, _ = encode_rows(loaded.context_rows, schema, loaded.encoders)
        qa, _ = encode_rows(query_rows, schema, ckpt.encoders)
        qb, _ = encode_rows(query_rows, schema, loaded.encoders)
        pa = predict_gaussian(ckpt.build_model(), qa, "fixed-context", context_batch=ctx_a)
        pb = predict_gaussian(loaded.build_model(), qb, "fixed-context", context_batch=ctx_b)
        assert [(p.mu, p.sigma) for p in pa] == [(p.mu, p.sigma) for p in pb]

    def test_flipped_payload_byte_is_integrity_error(self, market, tmp_path):
        _, path = self._roundtrip(market, tmp_path)
        raw = bytearray(path.read_bytes())
        raw[-10] ^= 0xFF  # inside the last parameter blob
        path.write_bytes(bytes(raw))
        with pytest.raises(IntegrityError):
            load_checkpoint(path)

    def test_truncated_file_is_integrity_error(self, market, tmp_path):
        _, path = self._roundtrip(market, tmp_path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) // 2])
        with pytest.raises(IntegrityError):
            load_checkpoint(path)

    def test_future_version_rejected(self, market, tmp_path):
        _, path = self._roundtrip(market, tmp_path)
        raw = path.read_bytes()
        patched = raw.replace(b'"format_version": 1', b'"format_version": 9', 1)
        assert patched != raw
        path.write_bytes(patched)
        with pytest.raises(UnsupportedVersionError):
            load_checkpoint(path)

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"hello world, definitely not a checkpoint")
        from probsaint.errors import CheckpointError

        with pytest.raises(CheckpointError):
            load_checkpoint(path)


class TestRandomSearch:
    def test_single_trial_returns_that_model(self, market):
        _, schema, parts = market
        space = SearchSpace(dims=(8,), depths=(1,), heads=(2,), dropouts=(0.0,), trials=1)
        base = tiny_cfg(max_epochs=2)
        ckpt, table = random_search(space, parts["train"][:48], parts["val"][:16], schema,
                                    base=base, trials=1, seed=3)
        assert len(table) == 1 and table[0]["val_metric"] is not None
        assert ckpt.model_config.d == 8

    def test_sampled_dims_stay_on_grid(self):
        space = SearchSpace()
        configs = sample_configs(space, trials=64, seed=9)
        assert {c["dim"] for c in configs} <= {32, 64, 128, 256}
        assert {c["depth"] for c in configs} <= {1, 2, 3, 6, 12}
        assert {c["heads"] for c in configs} <= {2, 4, 8}
        assert all(space.lr_low <= c["lr"] <= space.lr_high for c in configs)

    def test_same_seed_same_config_sequence(self):
        space = SearchSpace()
        assert sample_configs(space, 10, seed=4) == sample_configs(space, 10, seed=4)
        assert sample_configs(space, 10, seed=4) != sample_configs(space, 10, seed=5)

    def test_zero_trials_rejected(self, market):
        _, schema, parts = market
        with pytest.raises(ConfigurationError):
            random_search(SearchSpace(), parts["train"], parts["val"], schema, trials=0)


class TestObjectiveAgreement:
    @pytest.mark.slow
    def test_nll_and_mse_share_the_bayes_mean(self):
        """On homoscedastic data the two objectives should land on nearby
        mean predictions (within 2% MAPE of each other on the test split)."""
        spec = MarketSpec.default(n_rows=1600)
        spec.age_noise_slope = 0.0
        spec.sigma0 = 250.0
        rows = generate(spec, 31)
        schema = market_schema(spec)
        parts = time_split(rows, schema, "2022-05-20")
        common = dict(batch_size=64, max_epochs=30, patience=30, lr=2e-3, seed=7)
        cfg_nll = TrainConfig(
            model=ModelConfig(d=16, depth=1, heads=2, dropout=0.0, context_batch_size=16),
            objective="nll", **common,
        )
        cfg_mse = TrainConfig(
            model=ModelConfig(d=16, depth=1, heads=2, dropout=0.0, head_outputs=1, context_batch_size=16),
            objective="mse", **common,
        )
        ckpt_nll, _ = train(parts["train"], parts["val"], schema, cfg_nll)
        ckpt_mse, _ = train(parts["train"], parts["val"], schema, cfg_mse)

        test_batch, _ = encode_rows(parts["test"], schema, ckpt_nll.encoders, require_target=True)
        preds_nll = predict_gaussian(ckpt_nll.build_model(), test_batch, "batch-as-is", batch_size=64)
        mu_nll = np.asarray([p.mu for p in preds_nll])

        model_mse = ckpt_mse.build_model()
        test_mse, _ = encode_rows(parts["test"], schema, ckpt_mse.encoders, require_target=True)
        from probsaint import autodiff as ad

        mu_parts = []
        with ad.no_grad():
            for start in range(0, len(test_mse), 64):
                chunk = test_mse.take(np.arange(start, min(start + 64, len(test_mse))))
                mu, _ = model_mse.forward_encoded(chunk)
                mu_parts.append(mu.data)
        mu_mse = np.concatenate(mu_parts) * ckpt_mse.encoders.target_std + ckpt_mse.encoders.target_mean

        assert mape_metric(mu_mse, mu_nll) < 0.02


class TestFingerprint:
    def test_order_sensitive_digest(self):
        rows = [{"a": "1"}, {"a": "2"}]
        assert data_fingerprint(rows) != data_fingerprint(rows[::-1])
        assert data_fingerprint(rows) == data_fingerprint([{"a": "1"}, {"a": "2"}])
