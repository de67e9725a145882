"""Generative and discriminative transition parsing with word-synchronous search and candidate reranking."""
