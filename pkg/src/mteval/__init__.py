"""Multilingual machine-translation evaluation and QA toolkit.

Subpackages cover subword-level BLEU scoring, unigram subword tokenizer
training, automatic translation QA checks, the translation/re-translation
workflow, corpus statistics, direction-matrix analyses, and a
hidden-reference evaluation server.
"""

__version__ = "0.1.0"
