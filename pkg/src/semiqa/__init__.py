"""Semi-supervised extractive question answering.

A span-predicting reader and an answer-conditioned question generator are
trained jointly: the reader learns from human questions plus generated
questions marked with domain tags, and the generator is tuned with
REINFORCE so that its questions help the reader. Rule-based answer
extraction turns tagged raw text into the unlabeled training pool.
"""

__version__ = "0.1.0"
