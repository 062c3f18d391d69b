import pytest

from dacnet.errors import UnknownDiseaseError
from dacnet.labels import (
    DISEASES,
    NO_FINDING,
    NUM_DISEASES,
    combination_key,
    decode_labels,
    disease_index,
    encode_labels,
)


def test_canonical_ordering_is_alphabetical_and_fixed():
    assert NUM_DISEASES == 14
    assert list(DISEASES) == sorted(DISEASES)
    assert DISEASES[0] == "Atelectasis"
    assert DISEASES[-1] == "Pneumothorax"
    assert "Pleural_Thickening" in DISEASES


def test_name_index_bijection_total():
    for i, name in enumerate(DISEASES):
        assert disease_index(name) == i
        assert decode_labels(encode_labels([name])) == [name]


def test_encode_multi_label():
    bits = encode_labels(["Cardiomegaly", "Effusion"])
    assert sum(bits) == 2
    assert bits[disease_index("Cardiomegaly")] == 1
    assert bits[disease_index("Effusion")] == 1


def test_no_finding_is_all_zero_not_a_15th_bit():
    bits = encode_labels([NO_FINDING])
    assert bits == (0,) * NUM_DISEASES
    assert len(bits) == 14


def test_unknown_token_raises():
    with pytest.raises(UnknownDiseaseError, match="Pneumonitis"):
        encode_labels(["Pneumonitis"])


def test_combination_key_canonical_order():
    bits = encode_labels(["Effusion", "Atelectasis"])
    assert combination_key(bits) == "Atelectasis|Effusion"
    assert combination_key((0,) * NUM_DISEASES) == NO_FINDING
