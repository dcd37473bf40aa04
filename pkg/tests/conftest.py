import dataclasses

import pytest

from cyclicdp.schedule import Task, TaskKind, Timeline


def rebuild_with_tasks(tl: Timeline, tasks) -> Timeline:
    """Reassemble a timeline from an edited task list (fault injection)."""
    return Timeline.from_parts(
        tl.scheme, tl.cfg, tl.devices, tasks, tl.comm_events, tl.horizon
    )


def move_task(tl: Timeline, key, new_start: int) -> Timeline:
    """Shift the task with key (kind, micro_batch, stage, step) to new_start."""
    tasks = []
    hit = False
    for t in tl.tasks:
        if t.key() == key:
            tasks.append(dataclasses.replace(t, start=new_start))
            hit = True
        else:
            tasks.append(t)
    assert hit, f"no task with key {key}"
    return rebuild_with_tasks(tl, tasks)


def force_versions(tl: Timeline, version_of) -> Timeline:
    """Rewrite every task's param_version via version_of(task)."""
    tasks = [dataclasses.replace(t, param_version=version_of(t)) for t in tl.tasks]
    return rebuild_with_tasks(tl, tasks)


def dependency_edges(tl: Timeline):
    """Brute-force happens-before enumeration, independent of the validator.

    Yields (before, after) task pairs that must satisfy before.end < after.start:
    the stage sweeps, forward-before-backward, and version publication (a read
    of version v waits on every backward contribution of step v-1).
    """
    index = tl.task_index()
    n = tl.n
    for t in tl.tasks:
        i, j, s = t.micro_batch, t.stage, t.training_step
        if t.kind is TaskKind.FORWARD and j > 1:
            yield index[(TaskKind.FORWARD, i, j - 1, s)], t
        if t.kind is TaskKind.BACKWARD:
            yield index[(TaskKind.FORWARD, i, j, s)], t
            if j < n:
                yield index[(TaskKind.BACKWARD, i, j + 1, s)], t
        if t.param_version >= 2:
            for i2 in range(1, n + 1):
                dep = index.get((TaskKind.BACKWARD, i2, t.stage, t.param_version - 1))
                if dep is not None:
                    yield dep, t


def brute_force_ok(tl: Timeline) -> bool:
    return all(before.end < after.start for before, after in dependency_edges(tl))


@pytest.fixture
def tmp_out(tmp_path):
    return tmp_path / "out"
