import numpy as np
import pytest

from gradcheck import DOUBLE_EPS, DOUBLE_TOL, rel_error
from windowrl.encoder import (
    EncoderConfig,
    HistoryWindow,
    ParallelEncoderParams,
    RawEncoderParams,
    encode_backward,
    encode_batch,
    encode_window,
    init_encoder,
    recurrent_encode,
)
from windowrl.errors import ContractViolationError
from windowrl.nn import finite_diff_gradients, mlp_forward

OBS = 4


def parallel_config(h=3):
    return EncoderConfig(
        window_length=h,
        per_step_embed_width=6,
        combiner_hidden_widths=(8,),
        context_width=5,
        variant="parallel",
    )


def recurrent_config(h=3):
    return EncoderConfig(window_length=h, context_width=5, variant="recurrent")


def random_window(rng, h, n=OBS, valid_count=None):
    if valid_count is None:
        valid_count = h
    rows = rng.standard_normal((h, n))
    rows[: h - valid_count] = rows[h - valid_count]  # padding repeats first obs
    return HistoryWindow(rows, valid_count=valid_count)


class TestHistoryWindow:
    def test_start_repeats_first_observation(self):
        w = HistoryWindow.start(np.array([1.0, 2.0]), h=4)
        assert w.valid_count == 1
        assert np.array_equal(w.observations, np.tile([1.0, 2.0], (4, 1)))

    def test_advance_shifts_and_grows(self):
        w = HistoryWindow.start(np.array([1.0]), h=3)
        w = w.advance(np.array([2.0]))
        assert w.valid_count == 2
        np.testing.assert_array_equal(w.observations[:, 0], [1.0, 1.0, 2.0])
        w = w.advance(np.array([3.0]))
        w = w.advance(np.array([4.0]))
        assert w.valid_count == 3
        np.testing.assert_array_equal(w.observations[:, 0], [2.0, 3.0, 4.0])

    def test_rejects_bad_valid_count(self):
        with pytest.raises(ContractViolationError):
            HistoryWindow(np.zeros((3, 2)), valid_count=0)

    def test_rejects_non_finite(self):
        rows = np.zeros((2, 2))
        rows[0, 0] = np.nan
        with pytest.raises(ContractViolationError):
            HistoryWindow(rows, valid_count=2)

    def test_rejects_broken_padding(self):
        # valid_count=1 with 3 rows requires rows 0 and 1 to repeat row 0's
        # padding source (row 2's episode-first observation); distinct rows fail
        rows = np.arange(6.0).reshape(3, 2)
        with pytest.raises(ContractViolationError):
            HistoryWindow(rows, valid_count=1)


class TestConfig:
    def test_none_variant_forces_h1(self):
        with pytest.raises(ContractViolationError):
            EncoderConfig(window_length=3, variant="none")

    def test_unknown_variant(self):
        with pytest.raises(ContractViolationError):
            EncoderConfig(variant="attention")


class TestParallelForward:
    def test_h1_is_combiner_of_embed(self):
        cfg = parallel_config(h=1)
        params = init_encoder(cfg, OBS, seed=0, dtype=np.float64)
        obs = np.random.default_rng(1).standard_normal(OBS)
        window = HistoryWindow(obs[None, :], valid_count=1)
        ctx = encode_window(params, cfg, window)
        emb = mlp_forward(params.embed, params.embed_spec, obs)
        want = mlp_forward(params.combiner, params.combiner_spec, emb)
        np.testing.assert_array_equal(ctx, want)

    def test_zero_params_zero_context(self):
        cfg = parallel_config()
        params = init_encoder(cfg, OBS, seed=0)
        zeroed = params.replace_arrays([np.zeros_like(a) for a in params.arrays()])
        window = random_window(np.random.default_rng(2), cfg.window_length)
        ctx = encode_window(zeroed, cfg, window)
        assert np.all(ctx == 0)

    def test_perturbed_row_changes_context(self):
        cfg = parallel_config()
        rng = np.random.default_rng(3)
        for seed in range(20):
            params = init_encoder(cfg, OBS, seed=seed, dtype=np.float64)
            obs = rng.standard_normal(OBS)
            same = HistoryWindow(np.tile(obs, (3, 1)), valid_count=3)
            rows = np.tile(obs, (3, 1))
            rows[1] = rows[1] + rng.standard_normal(OBS)
            perturbed = HistoryWindow(rows, valid_count=3)
            assert not np.array_equal(
                encode_window(params, cfg, same), encode_window(params, cfg, perturbed)
            )

    def test_row_swap_changes_context(self):
        # the combiner is position-aware: swapping two distinct rows matters
        cfg = parallel_config()
        rng = np.random.default_rng(4)
        changed = 0
        for seed in range(20):
            params = init_encoder(cfg, OBS, seed=100 + seed, dtype=np.float64)
            window = random_window(rng, cfg.window_length)
            swapped_rows = window.observations.copy()
            swapped_rows[[0, 2]] = swapped_rows[[2, 0]]
            swapped = HistoryWindow(swapped_rows, valid_count=3)
            if not np.array_equal(
                encode_window(params, cfg, window), encode_window(params, cfg, swapped)
            ):
                changed += 1
        assert changed == 20

    def test_embedding_order_invariance_bit_exact(self):
        # embeddings computed row-by-row in shuffled order, then combined,
        # must reproduce encode_window to the last bit
        cfg = parallel_config(h=5)
        params = init_encoder(cfg, OBS, seed=7)
        rng = np.random.default_rng(5)
        window = random_window(rng, 5)
        ctx = encode_window(params, cfg, window)
        for trial in range(10):
            order = rng.permutation(5)
            embeds = [None] * 5
            for row in order:
                embeds[row] = mlp_forward(
                    params.embed, params.embed_spec, window.observations[row]
                )
            shuffled_ctx = mlp_forward(
                params.combiner, params.combiner_spec, np.concatenate(embeds)
            )
            assert np.array_equal(ctx, shuffled_ctx)

    def test_batch_matches_single(self):
        cfg = parallel_config()
        params = init_encoder(cfg, OBS, seed=11, dtype=np.float64)
        rng = np.random.default_rng(6)
        windows = np.stack([random_window(rng, 3).observations for _ in range(7)])
        ctx_batch, _ = encode_batch(params, cfg, windows)
        for i in range(7):
            single = encode_window(params, cfg, HistoryWindow(windows[i], valid_count=3))
            np.testing.assert_allclose(ctx_batch[i], single, rtol=1e-12)

    def test_shape_mismatch(self):
        cfg = parallel_config()
        params = init_encoder(cfg, OBS, seed=0)
        with pytest.raises(ContractViolationError):
            encode_window(params, cfg, HistoryWindow(np.zeros((2, OBS)), valid_count=2))
        with pytest.raises(ContractViolationError):
            encode_window(params, cfg, HistoryWindow(np.zeros((3, OBS + 1)), valid_count=3))


class TestParallelBackward:
    def test_zero_upstream(self):
        cfg = parallel_config()
        params = init_encoder(cfg, OBS, seed=1)
        window = random_window(np.random.default_rng(7), 3)
        grads, dwin = encode_backward(params, cfg, window, np.zeros(5))
        assert all(np.all(g == 0) for g in grads)
        assert np.all(dwin == 0)

    def test_identical_rows_double_single_step_contribution(self):
        # H=2, both rows equal, linear combiner with tied slot weights: the
        # shared embedding's gradient is exactly twice the single-step case
        from windowrl.nn import MlpParams, MlpSpec

        cfg = EncoderConfig(
            window_length=2,
            per_step_embed_width=4,
            combiner_hidden_widths=(),
            context_width=3,
            variant="parallel",
        )
        params = init_encoder(cfg, OBS, seed=3, dtype=np.float64)
        tied = params.combiner.weights[0].copy()
        tied[:, 4:] = tied[:, :4]  # both temporal slots see identical weights
        params.combiner.weights[0] = tied

        obs = np.random.default_rng(8).standard_normal(OBS)
        window = HistoryWindow(np.tile(obs, (2, 1)), valid_count=2)
        upstream = np.random.default_rng(9).standard_normal(3)
        grads, dwin = encode_backward(params, cfg, window, upstream)
        n_embed_arrays = 2 * params.embed_spec.n_layers
        embed_grads = grads[:n_embed_arrays]

        # per-step symmetry: both window rows receive the same gradient
        np.testing.assert_allclose(dwin[0], dwin[1], rtol=1e-12)

        # one slot alone, same weights: exactly half the embedding gradient
        cfg1 = EncoderConfig(
            window_length=1,
            per_step_embed_width=4,
            combiner_hidden_widths=(),
            context_width=3,
            variant="parallel",
        )
        params1 = ParallelEncoderParams(
            embed_spec=params.embed_spec,
            embed=params.embed,
            combiner_spec=MlpSpec((4, 3)),
            combiner=MlpParams(
                [tied[:, :4].copy()], [params.combiner.biases[0].copy()]
            ),
        )
        window1 = HistoryWindow(obs[None, :], valid_count=1)
        grads1, _ = encode_backward(params1, cfg1, window1, upstream)
        for g2, g1 in zip(embed_grads, grads1[:n_embed_arrays]):
            np.testing.assert_allclose(g2, 2.0 * g1, rtol=1e-10)

    def test_matches_finite_differences(self):
        cfg = parallel_config()
        rng = np.random.default_rng(10)
        for trial in range(5):
            params = init_encoder(cfg, OBS, seed=50 + trial, dtype=np.float64)
            window = random_window(rng, 3)
            upstream = rng.standard_normal(5)

            def loss(arrays):
                p = params.replace_arrays(arrays)
                return float(encode_window(p, cfg, window) @ upstream)

            analytic, _ = encode_backward(params, cfg, window, upstream)
            numeric = finite_diff_gradients(loss, params.arrays(), DOUBLE_EPS)
            assert rel_error(analytic, numeric) <= DOUBLE_TOL

    def test_window_gradient_matches_finite_differences(self):
        cfg = parallel_config()
        rng = np.random.default_rng(11)
        params = init_encoder(cfg, OBS, seed=77, dtype=np.float64)
        window = random_window(rng, 3)
        upstream = rng.standard_normal(5)

        def loss(arrays):
            w = HistoryWindow(arrays[0], valid_count=3)
            return float(encode_window(params, cfg, w) @ upstream)

        _, dwin = encode_backward(params, cfg, window, upstream)
        numeric = finite_diff_gradients(loss, [window.observations], DOUBLE_EPS)
        assert rel_error([dwin], numeric) <= DOUBLE_TOL


class TestRecurrent:
    def test_zero_params_zero_context(self):
        cfg = recurrent_config()
        params = init_encoder(cfg, OBS, seed=0)
        zeroed = params.replace_arrays([np.zeros_like(a) for a in params.arrays()])
        window = random_window(np.random.default_rng(12), 3)
        assert np.all(recurrent_encode(zeroed, window) == 0)

    def test_h1_is_single_cell_from_zero_state(self):
        cfg = recurrent_config(h=1)
        params = init_encoder(cfg, OBS, seed=5, dtype=np.float64)
        obs = np.random.default_rng(13).standard_normal(OBS)
        ctx = recurrent_encode(params, HistoryWindow(obs[None, :], valid_count=1))

        def sigmoid(x):
            return 1.0 / (1.0 + np.exp(-x))

        z = sigmoid(params.w_update @ obs + params.b_update)
        r = sigmoid(params.w_reset @ obs + params.b_reset)  # noqa: F841 (h=0 kills it)
        cand = np.tanh(params.w_cand @ obs + params.b_cand)
        want = (1.0 - z) * cand
        np.testing.assert_allclose(ctx, want, rtol=1e-12)

    def test_reversal_changes_context(self):
        rng = np.random.default_rng(14)
        changed = 0
        for seed in range(20):
            cfg = recurrent_config()
            params = init_encoder(cfg, OBS, seed=200 + seed, dtype=np.float64)
            window = random_window(rng, 3)
            reversed_w = HistoryWindow(window.observations[::-1].copy(), valid_count=3)
            a = recurrent_encode(params, window)
            b = recurrent_encode(params, reversed_w)
            if not np.array_equal(a, b):
                changed += 1
        assert changed == 20

    def test_matches_finite_differences(self):
        cfg = recurrent_config()
        rng = np.random.default_rng(15)
        for trial in range(5):
            params = init_encoder(cfg, OBS, seed=300 + trial, dtype=np.float64)
            window = random_window(rng, 3)
            upstream = rng.standard_normal(5)

            def loss(arrays):
                p = params.replace_arrays(arrays)
                return float(recurrent_encode(p, window) @ upstream)

            analytic, _ = encode_backward(params, cfg, window, upstream)
            numeric = finite_diff_gradients(loss, params.arrays(), DOUBLE_EPS)
            assert rel_error(analytic, numeric) <= DOUBLE_TOL

    def test_window_gradient_matches_finite_differences(self):
        cfg = recurrent_config()
        rng = np.random.default_rng(16)
        params = init_encoder(cfg, OBS, seed=400, dtype=np.float64)
        window = random_window(rng, 3)
        upstream = rng.standard_normal(5)

        def loss(arrays):
            w = HistoryWindow(arrays[0], valid_count=3)
            return float(recurrent_encode(params, w) @ upstream)

        _, dwin = encode_backward(params, cfg, window, upstream)
        numeric = finite_diff_gradients(loss, [window.observations], DOUBLE_EPS)
        assert rel_error([dwin], numeric) <= DOUBLE_TOL


class TestRawVariant:
    def test_context_is_current_observation(self):
        cfg = EncoderConfig(window_length=1, context_width=OBS, variant="none")
        params = init_encoder(cfg, OBS, seed=0)
        assert isinstance(params, RawEncoderParams)
        obs = np.random.default_rng(17).standard_normal(OBS)
        ctx = encode_window(params, cfg, HistoryWindow(obs[None, :], valid_count=1))
        np.testing.assert_array_equal(ctx, obs)

    def test_context_width_must_match_obs(self):
        cfg = EncoderConfig(window_length=1, context_width=OBS + 1, variant="none")
        with pytest.raises(ContractViolationError):
            init_encoder(cfg, OBS, seed=0)


class TestCurrentObservationOnly:
    """H=1 encodings depend only on the current observation."""

    @pytest.mark.parametrize("variant", ["parallel", "recurrent", "none"])
    def test_h1_consumes_only_the_current_observation(self, variant):
        if variant == "none":
            cfg = EncoderConfig(window_length=1, context_width=OBS, variant="none")
        elif variant == "parallel":
            cfg = parallel_config(h=1)
        else:
            cfg = recurrent_config(h=1)
        params = init_encoder(cfg, OBS, seed=9, dtype=np.float64)
        rng = np.random.default_rng(18)
        obs = rng.standard_normal(OBS)
        w = HistoryWindow(obs[None, :], valid_count=1)
        ctx = encode_window(params, cfg, w)
        # same current observation from a different "history" (none exists
        # at H=1, padding is a deterministic function of the valid rows)
        again = encode_window(params, cfg, HistoryWindow(obs[None, :].copy(), valid_count=1))
        np.testing.assert_array_equal(ctx, again)
