"""storynet: iterated creative transmission in grid social networks.

Simulator (scripted, LLM-backed, and live-human agents over a grid),
event-sourced run logs with deterministic replay, a participant session
service, and the quantitative analysis pipeline (lexical diversity
timelines, term dynamics, creativity-rating summaries, embedding export).
"""

__version__ = "0.1.0"
