from osfrl import verify
from osfrl.verify import Check, check_tail_sums, check_weights, run_checks


def test_weight_checks_pass():
    assert check_weights(t_max=2000) == []
    assert check_tail_sums() == []


def test_corrupted_step_size_names_sum_property():
    failures = check_weights(t_max=50, H_values=[2], step=lambda k, H: H / (H + k))
    assert any(f.startswith("weights.sum-to-one") for f in failures)


def test_corrupted_step_size_names_max_bound():
    # doubling late steps keeps alpha_1 = 1 but breaks the 2H/t bound
    step = lambda k, H: min(1.0, 2 * (H + 1) / (H + k)) if k > 1 else 1.0
    failures = check_weights(t_max=50, H_values=[1], step=step)
    assert any(f.startswith("weights.max-bound") for f in failures)


def test_corrupted_step_size_names_tail_sum():
    assert check_tail_sums(H_values=[2], step=lambda k, H: 1.0 / k)[0].startswith("weights.tail-sum")


def test_crashing_check_is_reported():
    def boom():
        raise RuntimeError("bad state")

    results = run_checks(checks=(Check("demo.crash", boom),))
    assert not results[0].ok and "bad state" in results[0].failures[0]


def test_quick_mode_skips_simulations():
    names = [c.name for c in verify.CHECKS if c.quick]
    assert "tables.cell" not in names and "hql.retention" not in names
