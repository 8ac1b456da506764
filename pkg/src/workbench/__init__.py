"""Human-intervenable planner/executor agent service.

A task runs as a planner/executor loop whose plan, files, tool calls, and
outputs stream live over a per-task event log; a human can pause the run,
edit the plan or any file, execute commands, and resume without losing the
agent's state.
"""

__version__ = "0.1.0"
