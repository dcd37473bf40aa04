import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cyclicdp import (
    ModelProfile,
    ProfileError,
    emit_profile,
    load_profile,
    make_homogeneous_profile,
    profile_from_dict,
    profile_to_dict,
)


def test_homogeneous_uniform_split():
    p = make_homogeneous_profile(4, 100, 400, 10)
    assert p.stage_params == (25,) * 4
    assert p.stage_acts_per_sample == (100,) * 4
    assert p.boundary_act_per_sample == 10
    assert p.is_homogeneous


def test_homogeneous_single_stage_identity():
    p = make_homogeneous_profile(1, 7, 7, 7)
    assert p.stage_params == (7,)
    assert p.stage_acts_per_sample == (7,)


def test_homogeneous_zero_activations():
    p = make_homogeneous_profile(3, 99, 0, 0)
    assert p.stage_params == (33,) * 3
    assert p.stage_acts_per_sample == (0, 0, 0)


def test_homogeneous_rejects_bad_inputs():
    with pytest.raises(ProfileError):
        make_homogeneous_profile(0, 10, 10, 0)
    with pytest.raises(ProfileError):
        make_homogeneous_profile(2, -4, 10, 0)
    with pytest.raises(ProfileError):
        make_homogeneous_profile(3, 100, 9, 0)  # uneven split
    with pytest.raises(ProfileError):
        make_homogeneous_profile(2, 10, 10, 11)  # boundary above total


def test_profile_invariants():
    with pytest.raises(ProfileError):
        ModelProfile((1, 2), (3,), 0)
    with pytest.raises(ProfileError):
        ModelProfile((), (), 0)
    with pytest.raises(ProfileError) as err:
        ModelProfile((1, -2), (3, 4), 0)
    assert "stages[1].params" in str(err.value)


def test_load_valid_document():
    text = """
    {"stages": [{"params": 5, "acts_per_sample": 7},
                {"params": 5, "acts_per_sample": 7},
                {"params": 5, "acts_per_sample": 7},
                {"params": 5, "acts_per_sample": 7}],
     "boundary_act_per_sample": 3}
    """
    p = load_profile(text)
    assert p.n_stages == 4
    assert p.total_params == 20


def test_load_negative_field_names_path():
    doc = {
        "stages": [{"params": -1, "acts_per_sample": 2}],
        "boundary_act_per_sample": 0,
    }
    with pytest.raises(ProfileError) as err:
        profile_from_dict(doc)
    assert err.value.path == "stages[0].params"


def test_unknown_keys_rejected():
    doc = {
        "stages": [{"params": 1, "acts_per_sample": 2, "flops": 3}],
        "boundary_act_per_sample": 0,
    }
    with pytest.raises(ProfileError) as err:
        profile_from_dict(doc)
    assert "flops" in str(err.value)
    with pytest.raises(ProfileError):
        profile_from_dict({"stages": [], "boundary_act_per_sample": 0, "extra": 1})


def test_round_trip_file(tmp_path):
    p = make_homogeneous_profile(3, 30, 300, 12)
    path = tmp_path / "profile.json"
    path.write_text(emit_profile(p))
    assert load_profile(str(path)) == p


@settings(max_examples=60, deadline=None)
@given(
    stages=st.lists(
        st.tuples(st.integers(0, 10**6), st.integers(0, 10**6)), min_size=1, max_size=12
    ),
    boundary=st.integers(0, 10**6),
)
def test_round_trip_property(stages, boundary):
    acts_total = sum(a for _, a in stages)
    boundary = min(boundary, acts_total)
    p = ModelProfile(
        tuple(x for x, _ in stages), tuple(a for _, a in stages), boundary
    )
    assert profile_from_dict(profile_to_dict(p)) == p
    assert load_profile(emit_profile(p)) == p
    assert sum(p.stage_acts_per_sample) == p.total_acts_per_sample
