from osaas_probe import bench, kernels


def test_cases_cover_every_conv_layer():
    cases = bench.cnn_cases()
    convs = {label for label, kernel, _ in cases if kernel == "conv1d_forward"}
    assert convs == {f"{b}.conv{i}" for b in ("freq", "comp") for i in range(3)}
    assert ("freq.conv0", "conv1d_forward", ((32 * 30, 2, 4), (8, 2, 3))) in cases


def test_run_times_every_backend(capsys):
    rows = bench.run(repeat=1, number=1)
    assert len(rows) == len(bench.cnn_cases())
    for r in rows:
        for name in kernels.backends():
            assert r[name] > 0
    assert bench.main(["--repeat", "1", "--number", "1"]) == 0
    out = capsys.readouterr().out
    assert out.startswith(f"active backend: {kernels.BACKEND}") and "freq.conv0" in out
