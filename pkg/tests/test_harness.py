import pytest

from simulpolicy.harness import (
    ConfigError,
    DataError,
    RunRecord,
    SweepConfig,
    emit_report,
    load_corpus,
    load_model_specs,
    load_models,
    parse_int_list,
    parse_rho_pairs,
    published_records,
    read_ensemble_file,
    read_report,
    run_eval_matrix,
    run_sweep,
    write_ensemble_file,
)
from simulpolicy.ensemble import select_bundles

from synth import write_config, write_copy_task


@pytest.fixture
def copy_task(tmp_path):
    src, ref, lex = write_copy_task(tmp_path, n_sentences=40, seed=1)
    return tmp_path, src, ref, lex


def sweep_config(directory, body, lex):
    text = body.format(lex=lex.name)
    return SweepConfig.from_file(write_config(directory / "sweep.ini", text))


def test_load_corpus(tmp_path):
    (tmp_path / "s").write_text("a b\nc d e\n", encoding="utf-8")
    (tmp_path / "r").write_text("A B\nC D E\n", encoding="utf-8")
    corpus = load_corpus(tmp_path / "s", [tmp_path / "r"])
    assert corpus.sources == (("a", "b"), ("c", "d", "e"))
    assert corpus.reference_sets == ((("A", "B"),), (("C", "D", "E"),))


def test_load_corpus_four_references(tmp_path):
    (tmp_path / "s").write_text("x\ny\n", encoding="utf-8")
    refs = []
    for i in range(4):
        refs.append(tmp_path / f"r{i}")
        refs[-1].write_text(f"x{i}\ny{i}\n", encoding="utf-8")
    corpus = load_corpus(tmp_path / "s", refs)
    assert all(len(rs) == 4 for rs in corpus.reference_sets)


def test_load_corpus_mismatch_names_both_files(tmp_path):
    (tmp_path / "src.txt").write_text("a\nb\n", encoding="utf-8")
    (tmp_path / "ref.txt").write_text("a\n", encoding="utf-8")
    with pytest.raises(DataError, match=r"src\.txt.*ref\.txt"):
        load_corpus(tmp_path / "src.txt", [tmp_path / "ref.txt"])


def test_load_corpus_empty_line_is_empty_sentence(tmp_path):
    (tmp_path / "s").write_text("a\n\nb\n", encoding="utf-8")
    corpus = load_corpus(tmp_path / "s", [tmp_path / "s"])
    assert corpus.sources[1] == ()


def test_parsers():
    assert parse_int_list("1-3, 7") == [1, 2, 3, 7]
    assert len(parse_rho_pairs("sweep")) == 18
    assert parse_rho_pairs("0.9/0.0, 1/1") == [(0.9, 0.0), (1.0, 1.0)]
    with pytest.raises(ConfigError):
        parse_int_list("a-b")
    with pytest.raises(ConfigError):
        parse_rho_pairs("0.5")


def test_config_errors(tmp_path, copy_task):
    _, _, _, lex = copy_task
    with pytest.raises(ConfigError, match="unknown method"):
        sweep_config(tmp_path, "[sweep]\nmethod = nope\n", lex)
    with pytest.raises(ConfigError, match="needs \\[sweep\\] scorer"):
        sweep_config(tmp_path, "[sweep]\nmethod = wait_if_diff\n", lex)
    with pytest.raises(ConfigError, match="not found"):
        sweep_config(tmp_path, "[sweep]\nmethod = wait_k\n[bank]\ndefault = scripted:missing.tsv\n", lex)
    with pytest.raises(ConfigError, match="no scorer for k=2"):
        sweep_config(tmp_path, "[sweep]\nmethod = wait_k\nk = 1-2\n[bank]\nk1 = dictionary:{lex}\n", lex)


def test_sweep_adaptive_grid_has_18_points(copy_task):
    d, src, ref, lex = copy_task
    cfg = sweep_config(d, "[sweep]\nmethod = adaptive_single\nk = 1-10\nrho = sweep\n"
                          "[bank]\ndefault = dictionary:{lex}:0.5\n", lex)
    records = run_sweep(cfg, load_corpus(src, [ref]))
    assert len(records) == 18
    assert records[0].params == "rho_first=0.2 rho_last=0"
    assert records[-1].params == "rho_first=1 rho_last=0.9"


def test_sweep_wait_k_ten_points(copy_task):
    d, src, ref, lex = copy_task
    cfg = sweep_config(d, "[sweep]\nmethod = wait_k\nk = 1-10\n[bank]\ndefault = dictionary:{lex}\n", lex)
    records = run_sweep(cfg, load_corpus(src, [ref]))
    assert [r.params for r in records] == [f"k={k}" for k in range(1, 11)]
    assert all(r.bleu == pytest.approx(100.0) for r in records)


def test_full_sentence_on_copy_task(copy_task):
    d, src, ref, lex = copy_task
    cfg = sweep_config(d, "[sweep]\nmethod = full_sentence_greedy\nscorer = dictionary:{lex}:0.5\n", lex)
    corpus = load_corpus(src, [ref])
    (rec,) = run_sweep(cfg, corpus)
    assert rec.bleu == pytest.approx(100.0)
    mean_len = sum(len(s) for s in corpus.sources) / len(corpus)
    assert rec.al == pytest.approx(mean_len, abs=1e-12)


def test_baseline_sweep_order(copy_task):
    d, src, ref, lex = copy_task
    cfg = sweep_config(d, "[sweep]\nmethod = wait_if_worse\ns0 = 1,2\ndelta = 1,2\nscorer = dictionary:{lex}\n", lex)
    records = run_sweep(cfg, load_corpus(src, [ref]))
    assert [r.params for r in records] == ["s0=1 delta=1", "s0=2 delta=1", "s0=1 delta=2", "s0=2 delta=2"]


def test_adaptive_zero_thresholds_equal_wait_kmin(copy_task):
    d, src, ref, lex = copy_task
    corpus = load_corpus(src, [ref])
    adaptive = sweep_config(d, "[sweep]\nmethod = adaptive_single\nk = 2-4\nrho = 0/0\n"
                               "[bank]\ndefault = dictionary:{lex}:0.6\n", lex)
    waitk = sweep_config(d, "[sweep]\nmethod = wait_k\nk = 2\n[bank]\ndefault = dictionary:{lex}:0.6\n", lex)
    (a,) = run_sweep(adaptive, corpus)
    (w,) = run_sweep(waitk, corpus)
    assert (a.bleu, a.al) == (w.bleu, w.al)


def test_catchup_threads_through_config(copy_task):
    d, src, ref, lex = copy_task
    corpus = load_corpus(src, [ref])
    plain = sweep_config(d, "[sweep]\nmethod = wait_k\nk = 1\n[bank]\ndefault = dictionary:{lex}\n", lex)
    catchup = sweep_config(d, "[sweep]\nmethod = wait_k\nk = 1\ncatchup_every = 2\n"
                              "[bank]\ndefault = dictionary:{lex}\n", lex)
    assert run_sweep(catchup, corpus)[0].al > run_sweep(plain, corpus)[0].al


# ---------------------------------------------------------------- reports


def test_report_row_format(tmp_path):
    out = tmp_path / "r.csv"
    emit_report([RunRecord("wait_k", "k=3", 32.45, 5.076, 1000, 0.0162)], out)
    data = out.read_bytes()
    assert data == b"method,params,bleu,al,sentences,sec_per_token\nwait_k,k=3,32.45,5.076,1000,0.0162\n"


def test_report_preserves_order_and_roundtrips(tmp_path):
    out = tmp_path / "r.csv"
    recs = [RunRecord("wait_k", "k=2", 30.74, 3.519, 3, None), RunRecord("wait_k", "k=1", 28.3, 2.968, 3, 0.5)]
    emit_report(recs, out)
    assert [r.params for r in read_report(out)] == ["k=2", "k=1"]
    assert read_report(out) == recs


def test_report_empty_rejected(tmp_path):
    with pytest.raises(ValueError):
        emit_report([], tmp_path / "r.csv")


def test_record_validation():
    with pytest.raises(ValueError):
        RunRecord("m", "p", 101.0, 1.0, 1)
    with pytest.raises(ValueError):
        RunRecord("m", "p", 10.0, float("nan"), 1)


def test_published_grids(tmp_path):
    zh = published_records("zh_en")
    assert len(zh) == 88
    row = next(r for r in zh if (r.method, r.params) == ("wait_k", "k=3"))
    assert (row.bleu, row.al) == (32.45, 5.076)
    top3 = next(r for r in zh if r.method == "adaptive_ensemble_top3" and r.params == "rho_first=0.9 rho_last=0")
    assert (top3.bleu, top3.al) == (40.15, 8.209)
    de = published_records("de_en")
    assert next(r for r in de if r.params == "greedy").bleu == 29.74
    out = tmp_path / "published.csv"
    emit_report(zh, out)
    assert "wait_k,k=3,32.45,5.076,0,\n" in out.read_text()


# ---------------------------------------------------------------- eval matrix pipeline


def models_config(directory, lex, n=10):
    body = "".join(f"[model m{k}]\ntrained_k = {k}\nscorer = dictionary:{lex.name}:{0.05 + 0.09 * k:.2f}\n\n"
                   for k in range(1, n + 1))
    return write_config(directory / "models.ini", body)


def test_eval_matrix_dimensions_and_selection(copy_task):
    d, src, ref, lex = copy_task
    specs = load_model_specs(models_config(d, lex))
    corpus = load_corpus(src, [ref])
    out = d / "matrix.csv"
    matrix = run_eval_matrix(load_models(specs), list(range(1, 11)), corpus, out)
    assert len(out.read_text().splitlines()) == 101
    bundles = select_bundles(matrix, range(1, 11), 3)
    assert all(len(v) == 3 for v in bundles.values())
    write_ensemble_file(bundles, d / "top3.ini")
    assert read_ensemble_file(d / "top3.ini") == bundles

    sweep = write_config(
        d / "ens.ini",
        models_config(d, lex).read_text() + "[sweep]\nmethod = adaptive_ensemble_top3\nk = 1-10\n"
        "rho = 0.9/0.0\nensemble = top3.ini\n",
    )
    (rec,) = run_sweep(SweepConfig.from_file(sweep), corpus)
    assert rec.bleu == pytest.approx(100.0)

    sweep_all = write_config(
        d / "all.ini",
        models_config(d, lex).read_text() + "[sweep]\nmethod = adaptive_ensemble_all\nk = 1-10\nrho = 0.9/0.0\n",
    )
    assert run_sweep(SweepConfig.from_file(sweep_all), corpus)[0].sentences == len(corpus)

    from_matrix = write_config(
        d / "mx.ini",
        models_config(d, lex).read_text() + "[sweep]\nmethod = adaptive_ensemble_top3\nk = 1-10\n"
        "rho = 0.9/0.0\nmatrix = matrix.csv\n",
    )
    (again,) = run_sweep(SweepConfig.from_file(from_matrix), corpus)
    assert (again.bleu, again.al) == (rec.bleu, rec.al)


def test_eval_matrix_needs_policies(copy_task):
    d, src, ref, lex = copy_task
    models = load_models(load_model_specs(models_config(d, lex, 2)))
    with pytest.raises(ConfigError):
        run_eval_matrix(models, [], load_corpus(src, [ref]))


def test_scripted_bank_vocabularies_are_aligned(tmp_path):
    (tmp_path / "m1.tsv").write_text("s1\t|\tA:0.95 </s>:0.05\n", encoding="utf-8")
    (tmp_path / "m2.tsv").write_text("s1 </s>\tA\tB:0.7 </s>:0.3\n", encoding="utf-8")
    (tmp_path / "s").write_text("s1\n", encoding="utf-8")
    cfg = SweepConfig.from_file(write_config(
        tmp_path / "c.ini",
        "[sweep]\nmethod = adaptive_single\nk = 1-2\nrho = 0.9/0.0\n[bank]\nk1 = scripted:m1.tsv\nk2 = scripted:m2.tsv\n",
    ))
    (rec,) = run_sweep(cfg, load_corpus(tmp_path / "s", [tmp_path / "s"]))
    assert rec.sentences == 1


def test_select_all_models_reproduces_ensemble_all(copy_task):
    d, src, ref, lex = copy_task
    corpus = load_corpus(src, [ref])
    models = models_config(d, lex, 4).read_text()
    matrix = run_eval_matrix(load_models(load_model_specs(d / "models.ini")), [1, 2, 3, 4], corpus)
    write_ensemble_file(select_bundles(matrix, range(1, 5), 4), d / "every.ini")
    selected = write_config(d / "sel.ini", models + "[sweep]\nmethod = adaptive_ensemble_top3\nk = 1-4\n"
                                                    "rho = 0.6/0.2\nensemble = every.ini\n")
    everything = write_config(d / "all.ini", models + "[sweep]\nmethod = adaptive_ensemble_all\nk = 1-4\n"
                                                      "rho = 0.6/0.2\n")
    (a,) = run_sweep(SweepConfig.from_file(selected), corpus)
    (b,) = run_sweep(SweepConfig.from_file(everything), corpus)
    assert (a.bleu, a.al) == pytest.approx((b.bleu, b.al), abs=1e-9)
