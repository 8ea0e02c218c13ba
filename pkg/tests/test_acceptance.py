"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines.
"""

import subprocess
import sys

import numpy as np
import pytest

from gradcheck import fd_gradcheck
from qsift import layers as L
from qsift import metrics as ME
from qsift import models as M
from qsift import objectives as O
from qsift import tensor as T
from qsift import tokenizer as tok
from qsift import training as TR
from qsift.cli import run_cli
from qsift.data import LabeledExample, stratified_split

SPECIALS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]


class criterion:
    """Prints 'PASS: <name>' or 'FAIL: <name>' as the block exits."""

    def __init__(self, name):
        self.name = name
        self.note = ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        suffix = f" ({self.note})" if self.note else ""
        print(f"\n{status}: {self.name}{suffix}")
        return False


# --- 1. F1 arithmetic reproduction -------------------------------------------

RESULTS_TABLE = {
    "BERT": (0.7629, 0.7271, 0.7446),
    "DistilBERT": (0.7481, 0.6854, 0.7154),
    "RoBERTa": (0.6869, 0.5030, 0.5807),
    "ALBERT": (0.6583, 0.3827, 0.4840),
}


def test_f1_arithmetic_reproduction():
    with criterion("F1 arithmetic reproduction (4 rows, tol 5e-5)") as c:
        worst = 0.0
        for name, (precision, recall, printed_f1) in RESULTS_TABLE.items():
            computed = ME.f1_score(precision, recall)
            gap = abs(computed - printed_f1)
            worst = max(worst, gap)
            assert gap < 5e-5, f"{name}: {computed} vs {printed_f1}"
        c.note = f"max |gap| = {worst:.2e}"


# --- 2. gradient suite --------------------------------------------------------


def _sq(t):
    return T.tsum(T.mul(t, t))


def _op_registry(rng):
    """(name, loss_fn, probe_leaves, all_leaves) for every layer and loss."""
    ops = []

    a = T.parameter(rng.normal(size=(3, 4)))
    b = T.parameter(rng.normal(size=(4, 2)))
    ops.append(("matmul", lambda: _sq(T.matmul(a, b)), [a], [a, b]))

    x_sm = T.parameter(rng.normal(size=(3, 4)))
    ops.append(("softmax", lambda: _sq(T.softmax(x_sm, 1)), [x_sm], [x_sm]))

    x_ln = T.parameter(rng.normal(size=(3, 4)))
    g_ln = T.parameter(rng.normal(size=4))
    b_ln = T.parameter(rng.normal(size=4))
    ops.append(("layer_norm", lambda: _sq(T.layer_norm(x_ln, g_ln, b_ln, 1e-5)),
                [x_ln], [x_ln, g_ln, b_ln]))

    table = T.parameter(rng.normal(size=(6, 4)))
    ids = rng.integers(0, 6, size=(2, 3))
    ops.append(("embedding", lambda: _sq(T.embedding(table, ids)), [table], [table]))

    rnn = L.init_rnn_cell(rng, 3, 4, 2)
    for t in (rnn.w_aa, rnn.w_ax, rnn.w_ya):
        t.data[:] = rng.normal(size=t.shape)
    x_r = T.parameter(rng.normal(size=(2, 3)))
    a_r = T.parameter(rng.normal(size=(2, 4)))

    def rnn_loss():
        at, yt = L.rnn_cell(x_r, a_r, rnn)
        return T.tsum(T.mul(at, at)) + _sq(yt)

    ops.append(("rnn_cell", rnn_loss, [x_r, a_r],
                [x_r, a_r, rnn.w_aa, rnn.w_ax, rnn.w_ya, rnn.b_a, rnn.b_y]))

    lstm = L.init_lstm_cell(rng, 3, 4)
    x_l = T.parameter(rng.normal(size=(2, 3)))
    a_l = T.parameter(rng.normal(size=(2, 4)))
    c_l = T.parameter(rng.normal(size=(2, 4)))

    def lstm_loss():
        at, ct = L.lstm_cell(x_l, a_l, c_l, lstm)
        return _sq(at) + _sq(ct)

    ops.append(("lstm_cell", lstm_loss, [x_l, a_l, c_l],
                [x_l, a_l, c_l, lstm.w_c, lstm.w_u, lstm.w_r, lstm.w_f, lstm.w_o,
                 lstm.b_c, lstm.b_u, lstm.b_f]))

    gru = L.init_gru_cell(rng, 3, 4)
    x_g = T.parameter(rng.normal(size=(2, 3)))
    a_g = T.parameter(rng.normal(size=(2, 4)))
    ops.append(("gru_cell", lambda: _sq(L.gru_cell(x_g, a_g, gru)), [x_g, a_g],
                [x_g, a_g, gru.w_z, gru.w_r, gru.w_h, gru.b_z, gru.b_r, gru.b_h]))

    fwd = L.init_lstm_cell(rng, 2, 3)
    bwd = L.init_lstm_cell(rng, 2, 3)
    steps = [T.parameter(rng.normal(size=(1, 2))) for _ in range(2)]

    def bilstm_loss():
        outs = L.bilstm_encode(steps, fwd, bwd)
        return _sq(T.concat(outs, axis=0))

    ops.append(("bilstm_encode", bilstm_loss, steps, steps + [fwd.w_c, bwd.w_c, fwd.b_o]))

    q = T.parameter(rng.normal(size=(3, 4)))
    k = T.parameter(rng.normal(size=(5, 4)))
    v = T.parameter(rng.normal(size=(5, 3)))
    att_mask = np.array([1, 1, 0, 1, 1])
    ops.append(("attention", lambda: _sq(L.attention(q, k, v, att_mask)), [q, k, v], [q, k, v]))

    mh = L.init_multi_head(rng, 6, 2)
    x_mh = T.parameter(rng.normal(size=(1, 4, 6)))
    ops.append(("multi_head_attention", lambda: _sq(L.multi_head_attention(x_mh, mh)),
                [x_mh], [x_mh, mh.w_q, mh.w_k, mh.w_v, mh.w_o, mh.b_q, mh.b_o]))

    w1 = T.parameter(rng.normal(size=(4, 6)))
    b1 = T.parameter(rng.normal(size=6))
    w2 = T.parameter(rng.normal(size=(6, 4)))
    b2 = T.parameter(rng.normal(size=4))
    x_ff = T.parameter(rng.normal(size=(3, 4)))
    ops.append(("feed_forward", lambda: _sq(L.feed_forward(x_ff, w1, b1, w2, b2, "gelu")),
                [x_ff], [x_ff, w1, b1, w2, b2]))

    blk = L.init_encoder_block(rng, 4, 2, 6)
    x_blk = T.parameter(rng.normal(size=(2, 3, 4)))
    blk_leaves = [x_blk, blk.attn.w_q, blk.attn.w_k, blk.attn.w_v, blk.attn.w_o,
                  blk.attn.b_q, blk.norm1_gain, blk.norm1_bias, blk.ff_w1, blk.ff_b1,
                  blk.ff_w2, blk.ff_b2, blk.norm2_gain, blk.norm2_bias]
    ops.append(("encoder_block", lambda: _sq(L.encoder_block(x_blk, blk)), [x_blk], blk_leaves))

    z = T.parameter(rng.normal(size=6))
    y_bce = (rng.random(6) < 0.5).astype(float)
    ops.append(("bce_loss", lambda: O.bce_loss(T.sigmoid(z), y_bce), [z], [z]))

    logits = T.parameter(rng.normal(size=(3, 5)))
    targets = rng.integers(0, 5, size=3)
    ops.append(("mlm_loss", lambda: O.mlm_loss(logits, targets), [logits], [logits]))

    sl = T.parameter(rng.normal(size=(3, 4)))
    sh = T.parameter(rng.normal(size=(3, 4)))
    tl = rng.normal(size=(3, 4))
    th = rng.normal(size=(3, 4))
    ids_d = rng.integers(0, 4, size=3)
    ops.append(("distillation_losses",
                lambda: O.distillation_losses(sl, tl, sh, th, ids_d).total(),
                [sl, sh], [sl, sh]))

    return ops


def test_gradient_suite():
    with criterion("gradient suite (every layer and loss, 100 seeds, rel err < 1e-4)") as c:
        checked = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            full_sweep = seed < 2
            for name, fn, probe, all_leaves in _op_registry(rng):
                leaves = all_leaves if full_sweep else probe
                failures = fd_gradcheck(fn, leaves)
                checked += sum(t.data.size for t in leaves)
                assert not failures, f"seed {seed}, op {name}: {failures[:3]}"
        c.note = f"{checked} coordinates checked"


# --- 3. AUC oracle equivalence -------------------------------------------------


def test_auc_oracle_equivalence():
    with criterion("AUC oracle equivalence (500 instances, n <= 200, exact)") as c:
        rng = np.random.default_rng(17)
        for case in range(500):
            n = int(rng.integers(2, 201))
            if case % 2 == 0:
                scores = np.round(rng.random(n), 1)  # heavy ties
            else:
                scores = rng.normal(size=n)
            labels = rng.integers(0, 2, n)
            if labels.sum() == 0:
                labels[0] = 1
            if labels.sum() == n:
                labels[0] = 0
            fast = ME.roc_auc(scores, labels)
            pos, neg = scores[labels == 1], scores[labels == 0]
            wins = (pos[:, None] > neg[None, :]).sum()
            ties = (pos[:, None] == neg[None, :]).sum()
            brute = (wins + 0.5 * ties) / (len(pos) * len(neg))
            assert fast == brute, f"case {case}: {fast} != {brute}"
        c.note = "rank form == pair counting on all 500"


# --- 4. masking statistics -------------------------------------------------------


def test_masking_statistics():
    with criterion("masking statistics (>=1e5 maskable, 15% +-0.01, 80/10/10 +-0.02)") as c:
        vocab = tok.Vocab(SPECIALS + [f"w{i}" for i in range(50)])
        rng = np.random.default_rng(23)
        total_maskable = 0
        selected = 0
        actions = {O.MASK_ACTION: 0, O.RANDOM_ACTION: 0, O.KEEP_ACTION: 0}
        while total_maskable < 100_000:
            n_words = int(rng.integers(30, 61))
            text = " ".join(f"w{int(rng.integers(50))}" for _ in range(n_words))
            seq = tok.encode(text, vocab, n_words + 2)
            plan = O.select_mask_positions(seq, 0.15, rng, vocab)
            total_maskable += n_words
            selected += len(plan.decisions)
            for d in plan.decisions:
                actions[d.action] += 1
                assert seq.attention_mask[d.position] == 1
                assert seq.ids[d.position] not in vocab.special_ids
                assert d.replacement_id not in (vocab.pad_id, vocab.cls_id, vocab.sep_id)
        frac = selected / total_maskable
        assert abs(frac - 0.15) < 0.01, frac
        shares = {k: v / selected for k, v in actions.items()}
        assert abs(shares[O.MASK_ACTION] - 0.80) < 0.02, shares
        assert abs(shares[O.RANDOM_ACTION] - 0.10) < 0.02, shares
        assert abs(shares[O.KEEP_ACTION] - 0.10) < 0.02, shares
        c.note = (f"{total_maskable} maskable, rate {frac:.4f}, split "
                  f"{shares[O.MASK_ACTION]:.3f}/{shares[O.RANDOM_ACTION]:.3f}/{shares[O.KEEP_ACTION]:.3f}")


# --- 5. variant-mechanism structural checks ------------------------------------


def test_variant_mechanisms():
    with criterion("variant mechanisms (sharing, factorization, student derivation)") as c:
        encoder_counts = set()
        for layers in (1, 2, 4, 8, 16):
            cfg = M.ModelConfig(num_layers=layers, hidden_size=16, num_heads=2, ff_size=24,
                                vocab_size=40, max_len=8, sharing_mode="all")
            encoder_counts.add(M.param_count(M.build_model(cfg), "encoder."))
        assert len(encoder_counts) == 1, encoder_counts

        rng = np.random.default_rng(5)
        for _ in range(20):
            h = int(rng.choice([8, 16, 32, 64]))
            e = int(rng.integers(2, h))
            v = int(rng.integers(10, 500))
            cfg = M.ModelConfig(num_layers=int(rng.integers(1, 4)), hidden_size=h,
                                num_heads=int(rng.choice([1, 2, 4])),
                                ff_size=int(rng.integers(4, 32)), vocab_size=v,
                                max_len=8, embedding_size=e)
            model = M.build_model(cfg)
            emb_params = (model.params["embeddings.token"].data.size
                          + model.params["embeddings.projection"].data.size)
            assert emb_params == v * e + e * h
            assert M.param_count(model) == M.expected_param_count(cfg)

        teacher = M.ModelConfig(num_layers=12, hidden_size=16, num_heads=2, ff_size=24,
                                vocab_size=40, max_len=8)
        student = M.derive_student_config(teacher)
        assert student.num_layers == 6
        assert not student.use_token_type_embeddings
        assert not student.use_pooler
        assert M.expected_param_count(student) < M.expected_param_count(teacher)
        c.note = "sharing depth-free; V*E+E*H on 20 configs; student halved"


# --- 6. end-to-end toy fine-tuning ----------------------------------------------


def test_toy_finetuning():
    with criterion("toy fine-tuning (2000 questions, 10% positive, AUC>=0.95, F1>=0.8)") as c:
        words = [f"w{i}" for i in range(30)]
        vocab = tok.Vocab(SPECIALS + words + ["trigger"])
        rng = np.random.default_rng(7)
        examples = []
        flags = np.zeros(2000, dtype=bool)
        flags[:200] = True  # exactly 10% positive
        rng.shuffle(flags)
        for i, positive in enumerate(flags):
            n = int(rng.integers(4, 12))
            ws = [words[int(rng.integers(len(words)))] for _ in range(n)]
            if positive:
                ws[int(rng.integers(n))] = "trigger"
            examples.append(LabeledExample(f"q{i}", " ".join(ws), int(positive)))
        train_ex, val_ex = stratified_split(examples, 0.2, seed=1)

        cfg = M.ModelConfig(num_layers=2, hidden_size=32, num_heads=2, ff_size=128,
                            vocab_size=len(vocab), max_len=32)
        model = M.build_model(cfg, seed=0)
        # batch 16, 3 epochs, Adam + BCE; lr raised to 1e-3 for the untrained toy model
        tc = TR.TrainConfig(learning_rate=1e-3, batch_size=16, epochs=3, seed=0)
        encode = lambda ex: (tok.encode(ex.question_text, vocab, 32), ex.target)
        history = TR.train(model, [encode(e) for e in train_ex], tc)
        assert len(history) == 3
        report = TR.evaluate(model, [encode(e) for e in val_ex])
        assert report.auc >= 0.95, report
        assert report.f1 >= 0.8, report
        c.note = f"val AUC {report.auc:.4f}, F1 {report.f1:.4f}"


# --- 7. distillation sanity -------------------------------------------------------


def test_distillation_sanity():
    with criterion("distillation sanity (cosine < 0.1 vs fixed teacher; exact zeros)") as c:
        words = [f"w{i}" for i in range(30)]
        vocab = tok.Vocab(SPECIALS + words)
        rng = np.random.default_rng(0)
        seqs = [tok.encode(" ".join(words[int(rng.integers(30))] for _ in range(8)), vocab, 16)
                for _ in range(200)]
        tcfg = M.ModelConfig(num_layers=2, hidden_size=32, num_heads=2, ff_size=64,
                             vocab_size=len(vocab), max_len=16, dropout_rate=0.0)
        teacher = M.build_model(tcfg, seed=1)
        frozen = {k: p.data.copy() for k, p in teacher.params.items()}
        student = M.build_model(M.derive_student_config(tcfg), seed=2)
        TR.distill(teacher, student, seqs, vocab,
                   TR.TrainConfig(learning_rate=1e-3, epochs=60, batch_size=16, seed=3))
        for k, p in teacher.params.items():
            np.testing.assert_array_equal(p.data, frozen[k])

        probe_rng = np.random.default_rng(99)
        masked, plans = O.dynamic_mask(seqs[:64], 0.15, probe_rng, vocab)
        positions = [(i, d.position) for i, plan in enumerate(plans) for d in plan.decisions]
        originals = [d.original_id for plan in plans for d in plan.decisions]
        t_logits, t_states = M.mlm_logits_and_states(teacher, masked, positions)
        s_logits, s_states = M.mlm_logits_and_states(student, masked, positions)
        losses = O.distillation_losses(s_logits, t_logits.data, s_states, t_states.data, originals)
        assert losses.cosine.item() < 0.1, losses.cosine.item()

        mirror = O.distillation_losses(s_logits, s_logits.data.copy(), s_states,
                                       s_states.data.copy(), originals)
        assert mirror.cosine.item() == 0.0
        assert mirror.kd.item() == 0.0
        c.note = f"probe cosine {losses.cosine.item():.4f}; identical-input terms exactly 0"


# --- 8. reproducibility -----------------------------------------------------------


@pytest.fixture
def cli_workspace(tmp_path):
    (tmp_path / "vocab.txt").write_text(
        "\n".join(SPECIALS + [f"w{i}" for i in range(20)] + ["trigger"]) + "\n")
    rng = np.random.default_rng(0)
    rows = ["qid,question_text,target"]
    for i in range(60):
        positive = rng.random() < 0.25
        ws = [f"w{int(rng.integers(20))}" for _ in range(int(rng.integers(3, 7)))]
        if positive:
            ws[0] = "trigger"
        rows.append(f"q{i},{' '.join(ws)},{int(positive)}")
    (tmp_path / "data.csv").write_text("\n".join(rows) + "\n")
    return tmp_path


def test_reproducibility(cli_workspace, capsys):
    with criterion("reproducibility (identical flags+seed give byte-identical records)") as c:
        train_argv = ["train", "--data", str(cli_workspace / "data.csv"),
                      "--vocab", str(cli_workspace / "vocab.txt"),
                      "--epochs", "2", "--batch-size", "16", "--lr", "1e-3",
                      "--max-len", "10", "--hidden", "16", "--heads", "2",
                      "--ff-size", "24", "--layers", "1", "--seed", "13",
                      "--save", str(cli_workspace / "m.ckpt")]
        outs = []
        for _ in range(2):
            proc = subprocess.run([sys.executable, "-m", "qsift.cli", *train_argv],
                                  capture_output=True)
            assert proc.returncode == 0, proc.stderr.decode()
            outs.append(proc.stdout)
        assert outs[0] == outs[1]

        eval_argv = ["eval", "--checkpoint", str(cli_workspace / "m.ckpt"),
                     "--data", str(cli_workspace / "data.csv"),
                     "--vocab", str(cli_workspace / "vocab.txt"), "--seed", "13"]
        captured = []
        for _ in range(2):
            assert run_cli(eval_argv) == 0
            captured.append(capsys.readouterr().out)
        assert captured[0] == captured[1]
        c.note = "train (subprocess) and eval byte-identical"
