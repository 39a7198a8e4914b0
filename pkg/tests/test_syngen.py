import pytest

from provgraph.events import write_events
from provgraph.syngen import CAMPAIGNS, GroundTruth, gen_campaign, generate


def _text(campaign, n, seed):
    import io
    events, truth = gen_campaign(campaign, n, seed)
    buf = io.StringIO()
    write_events(events, buf)
    return buf.getvalue(), truth


def test_deterministic_per_seed():
    a, ta = _text("w2", 3000, 42)
    b, tb = _text("w2", 3000, 42)
    c, _ = _text("w2", 3000, 43)
    assert a == b and ta == tb and a != c


def test_w2_truth_contents():
    _, truth = generate("w2", 1000, 42)
    assert truth.entry == ["IP:129.55.12.167:80"]
    assert {"firefox", "dropper", "cmd.exe", "whoami", "hostname", "netstat", "git"} <= set(truth.entities)
    assert ["UntrustedExec", "C:\\Users\\User1\\Downloads\\firefox\\dropper"] in truth.expected_alarms


def test_benign_has_no_expected_alarms():
    _, truth = generate("benign", 1000, 1)
    assert truth.expected_alarms == [] and truth.attack_seqs == []


@pytest.mark.parametrize("campaign", [c for c in CAMPAIGNS if c != "benign"])
def test_attack_seqs_exist_and_are_rare(campaign, tmp_path):
    events, truth = gen_campaign(campaign, 30_000, 7)
    seqs = [e.seq for e in events]
    assert seqs == sorted(seqs) and len(set(seqs)) == len(seqs)
    assert set(truth.attack_seqs) <= set(seqs)
    # planted activity is a few dozen events, so the share shrinks with noise volume
    assert len(truth.attack_seqs) / len(events) < 0.005
    assert truth.total_events == len(events)
    truth.save(tmp_path / "t.json")
    assert GroundTruth.load(tmp_path / "t.json") == truth


def test_unknown_campaign_rejected():
    with pytest.raises(ValueError):
        generate("nope", 10, 1)


@pytest.mark.parametrize("campaign", [c for c in CAMPAIGNS if c != "benign"])
def test_attack_share_below_a_tenth_percent_at_100k(campaign):
    events, truth = gen_campaign(campaign, 100_000, 42)
    assert len(truth.attack_seqs) / len(events) < 0.001
