"""Post-hoc explanations for knowledge-graph-embedding link predictions."""
