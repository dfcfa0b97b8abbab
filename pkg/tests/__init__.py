"""dbnids tests.

Run them all with 'python -m tests.aggregate_tests' from the repository root.
"""
