"""LTL task planning and barrier-based multi-agent control.

The package covers the full pipeline from per-agent temporal-logic tasks to a
verified closed-loop run:

- ``ltl``        formulas, parsing, lasso-word semantics
- ``buchi``      tableau translation of formulas to Buchi automata
- ``planner``    prefix-suffix plan synthesis on point transition systems
- ``graph``      proximity graphs, incidence matrices, connectivity
- ``controller`` barrier-based control and adaptation laws
- ``simulator``  closed-loop integration with priority switching
- ``monitor``    behavior extraction and runtime guarantee checks
- ``scenario``   scenario files and plan synthesis orchestration
- ``cli``        command line front end
"""

__version__ = "0.1.0"
