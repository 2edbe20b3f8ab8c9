import random
from dataclasses import replace

import pytest

from fuzzssd import device as dv
from fuzzssd.device import (
    ALL_BLOCKS,
    ConfigError,
    DeviceConfig,
    FaultKind,
    FaultSpec,
    Condition,
    IoCommand,
    Opcode,
    Status,
    instrumented_block_universe,
    preset,
    reset_device,
)

W, R, C, F, WZ, WU = Opcode

# 4 lines x 1 block x 4 pages; 3 logical pages keeps the reserve invariant satisfiable
TINY = DeviceConfig(
    num_lines=4,
    blocks_per_line=1,
    pages_per_block=4,
    logical_pages=3,
    gc_victim_threshold=1,
    wl_erase_gap_threshold=8,
    write_buffer_pages=1,
    max_nlb=1,
)


def cmd(op, lba=0, nlb=1, seed=0):
    return IoCommand(op, lba, nlb, seed)


def random_command(rng, config, ops=tuple(Opcode)):
    op = rng.choice(ops)
    if op is F:
        return dv.FLUSH
    lba = rng.randrange(config.logical_pages)
    nlb = min(rng.randint(1, config.max_nlb), config.logical_pages - lba)
    return IoCommand(op, lba, nlb, rng.randrange(256))


def test_buffered_write_consumes_no_flash():
    dev = reset_device(preset("desk-scale"))
    res = dev.apply(cmd(W, 0, 1))
    assert res.status is Status.SUCCESS
    assert res.fired_blocks[:2] == [dv.WRITE_ENTRY, dv.WRITE_BUFFERED]
    assert dev.valid_pages == 0 and dev.status.count(dv.FREE) == dev.total_pages


def test_read_of_unmapped_page_fails():
    dev = reset_device(preset("desk-scale"))
    res = dev.apply(cmd(R, 5, 1))
    assert res.status is Status.FAIL
    assert res.fired_blocks == [dv.READ_ENTRY, dv.READ_UNMAPPED]


def test_write_uncorrectable_then_read():
    dev = reset_device(preset("desk-scale"))
    dev.apply(cmd(WU, 3, 2))
    res = dev.apply(cmd(R, 3, 1))
    assert res.status is Status.FAIL
    assert dv.READ_UNCORRECTABLE in res.fired_blocks


def test_rewrite_clears_uncorrectable_mark():
    dev = reset_device(preset("desk-scale"))
    dev.apply(cmd(WU, 3, 1))
    assert dv.WU_CLEAR_BY_WRITE in dev.apply(cmd(W, 3, 1, 9)).fired_blocks
    assert dev.apply(cmd(R, 3, 1)).ok
    dev.apply(cmd(WU, 4, 1))
    assert dv.WZ_CLEAR_UNC in dev.apply(cmd(WZ, 4, 1)).fired_blocks
    assert dev.apply(cmd(C, 4, 1, 0)).ok


def test_compare_checks_payload():
    dev = reset_device(preset("desk-scale"))
    dev.apply(cmd(W, 10, 2, 7))
    assert dev.apply(cmd(C, 10, 2, 7)).fired_blocks[-1] == dv.COMPARE_MATCH
    dev.apply(cmd(F))
    ok = dev.apply(cmd(C, 10, 2, 7))
    assert ok.status is Status.SUCCESS
    bad = dev.apply(cmd(C, 10, 2, 8))
    assert bad.status is Status.FAIL and dv.COMPARE_MISMATCH in bad.fired_blocks
    assert dv.COMPARE_MATCH not in bad.fired_blocks


def test_flush_paths():
    dev = reset_device(preset("desk-scale"))
    assert dev.apply(dv.FLUSH).fired_blocks == [dv.FLUSH_ENTRY, dv.FLUSH_EMPTY]
    dev.apply(cmd(W, 0, 3))
    res = dev.apply(dv.FLUSH)
    assert res.fired_blocks[:3] == [dv.FLUSH_ENTRY, dv.FLUSH_COMMIT, dv.FTL_PROGRAM]
    assert dev.valid_pages == 3 and not dev.buffer


def test_buffer_overflow_commits_and_coalesces():
    dev = reset_device(preset("desk-scale"))
    res = dev.apply(cmd(W, 0, 4))
    assert dv.WRITE_BUFFERED in res.fired_blocks
    res = dev.apply(cmd(W, 2, 8))
    assert dv.WRITE_COALESCE in res.fired_blocks
    assert dv.WRITE_BUFFER_FULL in res.fired_blocks
    # 10 distinct pages: the 9th overflowed the 8-page buffer and drained it
    assert dev.valid_pages == 9 and list(dev.buffer) == [9]


def test_hand_traced_gc_on_tiny_geometry():
    dev = reset_device(TINY)
    dev.apply(cmd(W, 0))
    dev.apply(cmd(W, 1))  # overflow: lba 0,1 -> line 0 pages 0,1
    dev.apply(cmd(W, 2))
    assert dev.snapshot().victim_line_count == TINY.gc_victim_threshold - 1
    before = dev.snapshot()
    res = dev.apply(cmd(W, 0))  # lba 2 -> page 2, lba 0 -> page 3: line 0 full, page 0 invalid
    after = dev.snapshot()
    assert res.fired_blocks == [
        dv.WRITE_ENTRY,
        dv.WRITE_BUFFER_FULL,
        dv.FTL_PROGRAM,
        dv.FTL_INVALIDATE_OLD,
        dv.FTL_LINE_FULL,
        dv.GC_TRIGGER,
        dv.GC_SELECT_VICTIM,
        dv.GC_RELOCATE,
        dv.GC_ERASE,
    ]
    # victim line 0 erased, its three valid pages moved to line 1
    assert after.total_erase_count - before.total_erase_count == TINY.blocks_per_line
    assert after.free_line_count - before.free_line_count == 0
    assert after.gc_invocations == 1
    assert after.victim_line_count == 0
    assert dev.l2p == [6, 4, 5]
    dev.check_invariants()


def test_gc_fires_when_threshold_crossed_on_desk_scale():
    config = preset("desk-scale")
    dev = reset_device(config)
    rng = random.Random(3)
    for _ in range(5000):
        before = dev.snapshot()
        res = dev.apply(random_command(rng, config, (W,)))
        if dv.GC_TRIGGER in res.fired_blocks:
            break
    else:
        pytest.fail("GC never triggered")
    after = dev.snapshot()
    assert before.victim_line_count < config.gc_victim_threshold <= dev.last_trigger_victims
    for block in (dv.GC_TRIGGER, dv.GC_SELECT_VICTIM, dv.GC_ERASE):
        assert block in res.fired_blocks
    assert after.gc_invocations == 1
    assert after.total_erase_count >= config.blocks_per_line
    assert after.free_line_count >= before.free_line_count - 1


def test_snapshot_fresh_and_pure():
    dev = reset_device(preset("desk-scale"))
    snap = dev.snapshot()
    assert snap.victim_line_count == 0 and snap.total_invalid_pages == 0
    assert snap.gc_invocations == 0 and snap.per_segment_io == (0,) * 10
    assert snap.free_line_count == 32
    assert dev.snapshot() == snap


def test_per_segment_io_counts_host_pages_once():
    dev = reset_device(preset("desk-scale"))
    dev.apply(cmd(W, 0, 1))
    dev.apply(dv.FLUSH)
    assert dev.snapshot().per_segment_io == (1,) + (0,) * 9


def test_presets_and_validation():
    assert reset_device(preset("desk-scale")).free_line_count == 32
    assert preset("paper-scale").gc_victim_threshold == 190
    reset_device(preset("paper-scale"))
    with pytest.raises(ConfigError, match="gc_victim_threshold"):
        reset_device(replace(preset("desk-scale"), gc_victim_threshold=32))
    with pytest.raises(ConfigError, match="0.9"):
        DeviceConfig(logical_pages=1000).validate()
    with pytest.raises(ConfigError, match="unknown preset"):
        preset("nope")


def test_universe_for_write_read():
    uni = instrumented_block_universe([W, R])
    for prefix in ("WRITE_", "READ_", "GC_", "WL_"):
        assert any(b.startswith(prefix) for b in uni)
    assert dv.READ_UNCORRECTABLE not in uni
    assert not any(b.startswith(("COMPARE_", "FLUSH_", "WZ_", "WU_")) for b in uni)
    assert {b for b in ALL_BLOCKS if b.startswith(("WRITE_", "GC_", "WL_"))} <= uni


def test_universe_all_and_empty():
    assert instrumented_block_universe(Opcode) == frozenset(ALL_BLOCKS)
    with pytest.raises(ValueError):
        instrumented_block_universe([])


def test_every_universe_block_is_reachable_with_all_opcodes():
    # reachability audit: a long random run with every opcode fires every block
    config = preset("desk-scale")
    dev = reset_device(config)
    rng = random.Random(11)
    seen = set()
    hot = list(range(64))
    for i in range(60000):
        if i % 2:
            c = random_command(rng, config)
        else:
            c = IoCommand(W, rng.choice(hot), rng.randint(1, 16), rng.randrange(256))
        seen.update(dev.apply(c).fired_blocks)
    assert seen == set(ALL_BLOCKS)


def test_fault_hang_aborts_and_device_survives():
    faults = [
        FaultSpec(2, FaultKind.CRASH, None, (Condition("lba", ">=", 100),)),
        FaultSpec(1, FaultKind.HANG, W, (Condition("nlb", "==", 4),)),
    ]
    dev = reset_device(preset("desk-scale"))
    res = dev.apply(cmd(W, 200, 4), faults)
    assert res.status is Status.FAIL and res.fault_event.fault_id == 1
    assert res.fault_event.kind is FaultKind.HANG
    assert res.fired_blocks == [dv.WRITE_ENTRY] and not dev.buffer
    res = dev.apply(cmd(R, 200, 1), faults)
    assert res.fault_event.kind is FaultKind.CRASH
    assert dev.apply(cmd(W, 0, 1), faults).ok


@pytest.mark.parametrize("noise", [False, True])
def test_conservation_and_bijectivity(noise):
    config = replace(preset("desk-scale"), noise_enabled=noise, noise_seed=5)
    dev = reset_device(config)
    rng = random.Random(7)
    hot = range(0, 96)
    for i in range(10_000):
        if rng.random() < 0.4:
            c = IoCommand(W, rng.choice(hot), rng.randint(1, 16), 1)
        else:
            c = random_command(rng, config)
        dev.apply(c)
        dev.check_invariants()
    assert dev.gc_invocations > 0


def test_gc_progress_and_monotone_counters():
    config = preset("desk-scale")
    dev = reset_device(config)
    rng = random.Random(21)
    prev = dev.snapshot()
    for _ in range(8000):
        res = dev.apply(random_command(rng, config, (W, R, WZ)))
        snap = dev.snapshot()
        if dv.GC_TRIGGER in res.fired_blocks:
            # progress measured against the state that tripped the threshold
            assert snap.victim_line_count < dev.last_trigger_victims or snap.free_line_count > prev.free_line_count
        assert snap.total_erase_count >= prev.total_erase_count
        assert snap.gc_invocations >= prev.gc_invocations
        assert all(a >= b for a, b in zip(snap.per_segment_io, prev.per_segment_io))
        prev = snap


def _trace(config, seed, n=3000):
    dev = reset_device(config)
    rng = random.Random(seed)
    return [
        (tuple(r.fired_blocks), r.status, dev.snapshot())
        for r in (dev.apply(random_command(rng, config)) for _ in range(n))
    ]


def test_determinism_without_noise():
    config = preset("desk-scale")
    assert _trace(config, 4) == _trace(config, 4)


def test_seeded_noise_reproducible():
    a = replace(preset("desk-scale"), noise_enabled=True, noise_seed=1)
    b = replace(a, noise_seed=2)
    assert _trace(a, 4) == _trace(a, 4)
    assert _trace(a, 4) != _trace(b, 4)


def test_incremental_gc_spreads_relocation():
    config = replace(preset("desk-scale"), noise_enabled=True, noise_seed=9)
    dev = reset_device(config)
    rng = random.Random(2)
    while dev.pending_gc is None:
        dev.apply(random_command(rng, config, (W,)))
    steps = 0
    while dev.pending_gc is not None:
        dev.apply(cmd(R, 0, 1))
        steps += 1
    assert steps >= 1
