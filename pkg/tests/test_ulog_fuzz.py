import random
from collections import Counter

from fuzzing import FORMAT_ERROR, PARTIAL, SUCCESS, classify, mutate

from uavforensics import synthetic
from uavforensics.ulog import write_ulog


def small_fixture() -> bytes:
    log = synthetic.flight_log()
    for s in log.series.values():
        del s.rows[12:]
    return write_ulog(log)


class TestMutations:
    def test_unmutated_fixture_parses_cleanly(self):
        assert classify(small_fixture()) == SUCCESS

    def test_thousand_mutations_never_crash(self):
        base = small_fixture()
        rng = random.Random(20240601)
        seen = Counter(classify(mutate(base, rng)) for _ in range(1000))
        assert sum(seen.values()) == 1000
        assert set(seen) <= {SUCCESS, PARTIAL, FORMAT_ERROR}
        # the mutator should exercise the salvage paths, not just bounce off the magic
        assert seen[PARTIAL] > 100

    def test_every_prefix(self):
        base = small_fixture()[:600]
        for n in range(len(base) + 1):
            assert classify(base[:n]) in (SUCCESS, PARTIAL, FORMAT_ERROR)
