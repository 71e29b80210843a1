import math

import pytest

from difflang.errors import DomainError, UnknownModel, UnknownParameter
from difflang.models import (
    MODEL_NAMES,
    default_args,
    gaus_mixture,
    get_model,
    list_models,
    load_function,
    reference_gradient,
    relative_close,
    sample_points,
)
from difflang.reverse_mode import GradRequest, evaluate_gradient, gradient


class TestCorpus:

    def test_listing(self):
        assert list_models() == ["sum", "mvn", "breitwigner_pdf", "gaus", "expo"]
        assert list(MODEL_NAMES) == list_models()

    def test_unknown_model(self):
        with pytest.raises(UnknownModel) as exc:
            get_model("nope")
        assert "known:" in exc.value.message

    def test_entries_describe_their_functions(self):
        for name in MODEL_NAMES:
            entry = get_model(name)
            func = load_function(name)
            assert [p.name for p in entry.params] == [p.name for p in func.params]
            assert entry.reference

    def test_mixture(self):
        entry = get_model("gaus_mix2")
        assert entry is get_model("gaus_mix2")
        assert len(entry.scalar_params) == 7
        assert load_function("gaus_mix2").name == "gaus_mix2"
        with pytest.raises(UnknownModel):
            gaus_mixture(0)

    def test_default_args(self):
        assert default_args(get_model("sum")) == {"dim": 5}
        assert default_args(get_model("mvn"), dim=64) == {"dim": 64}
        assert default_args(get_model("gaus")) == {}


class TestSampling:

    def test_seeded_points_repeat(self):
        entry = get_model("mvn")
        assert sample_points(entry, 3, seed=7) == sample_points(entry, 3, seed=7)
        assert sample_points(entry, 3, seed=7) != sample_points(entry, 3, seed=8)

    def test_points_stay_in_domain(self):
        entry = get_model("breitwigner_pdf")
        for point in sample_points(entry, 50, seed=1):
            assert 0.5 <= point["gamma"] <= 3.0
            assert -2.0 <= point["x"] <= 2.0

    def test_array_length_follows_dim(self):
        point = sample_points(get_model("mvn"), 1, seed=0, dim=9)[0]
        assert point["dim"] == 9
        assert len(point["x"]) == len(point["p"]) == 9


class TestReference:

    def test_sum_is_all_ones(self):
        assert reference_gradient("sum", {"p": [0.3] * 4, "dim": 4}) == [1.0] * 4

    def test_slots_past_dim_are_zero(self):
        point = {"p": [0.3, 0.1, -0.2, 0.5], "dim": 2}
        expected = [1.0, 1.0, 0.0, 0.0]
        assert reference_gradient("sum", point) == expected
        assert evaluate_gradient(gradient(GradRequest.from_names(load_function("sum"))), point) == expected

    def test_mvn_slots_past_dim_are_zero(self):
        point = {"x": [0.1, -0.2, 0.7], "p": [0.0, 0.5, 0.9], "sigma": 1.2, "dim": 2}
        values = reference_gradient("mvn", point, ["x", "p"])
        assert len(values) == 6
        assert values[2] == values[5] == 0.0
        ad = evaluate_gradient(gradient(GradRequest(load_function("mvn"), ("x", "p"))), point)
        assert all(relative_close(a, b, 1e-12) for a, b in zip(ad, values))

    @pytest.mark.parametrize("model, point", [
        ("sum", {"p": [1.0, 2.0], "dim": 3}),
        ("mvn", {"x": [0.0] * 3, "p": [0.0] * 2, "sigma": 1.0, "dim": 3}),
    ])
    def test_dim_past_the_arrays(self, model, point):
        with pytest.raises(DomainError):
            reference_gradient(model, point)

    def test_breitwigner_zero(self):
        assert reference_gradient("breitwigner_pdf", {"x": 1.0, "gamma": 2.0, "x0": 0.0}, ["gamma"]) == [0.0]

    def test_breitwigner_off_zero(self):
        x, gamma = 1.0, 3.0
        expected = 2.0 * (4 * x * x - gamma * gamma) / (math.pi * (4 * x * x + gamma * gamma) ** 2)
        value = reference_gradient("breitwigner_pdf", {"x": x, "gamma": gamma, "x0": 0.0}, ["gamma"])[0]
        assert value == pytest.approx(expected, rel=1e-15)

    def test_layout_follows_declaration_order(self):
        point = {"x": 0.2, "a": 0.1, "b": -0.3}
        e = math.exp(0.1 - 0.3 * 0.2)
        assert reference_gradient("expo", point, ["b", "a"]) == pytest.approx([e, 0.2 * e])

    def test_mixture_sums_components(self):
        point = {"x": 0.3, "A0": 1.0, "mu0": 0.0, "sigma0": 1.0, "A1": 2.0, "mu1": 0.5, "sigma1": 0.7}
        single = reference_gradient("gaus", {"x": 0.3, "A": 1.0, "mu": 0.0, "sigma": 1.0}, ["x"])[0]
        other = reference_gradient("gaus", {"x": 0.3, "A": 2.0, "mu": 0.5, "sigma": 0.7}, ["x"])[0]
        assert reference_gradient("gaus_mix2", point, ["x"])[0] == pytest.approx(single + other, rel=1e-15)

    def test_unknown_wrt(self):
        with pytest.raises(UnknownParameter):
            reference_gradient("sum", {"p": [1.0], "dim": 1}, ["dim"])

    def test_relative_close(self):
        assert relative_close(1.0 + 1e-13, 1.0, 1e-12)
        assert not relative_close(1.1, 1.0, 1e-12)
        # near zero the bound is absolute
        assert relative_close(1e-13, 0.0, 1e-12)
