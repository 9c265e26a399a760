"""Coherent WDM transmission laboratory.

Modules: ``sigkit`` (symbols and fields), ``transmitter`` (pulse shaping and
WDM multiplexing), ``fiber`` (Manakov split-step propagation and
amplifiers), ``dsp`` (receiver chain and classical equalizers), ``rnn``
(multi-channel bidirectional vanilla RNN equalizer), ``analysis`` (BER,
multiplication counts, alignment search) and ``harness`` (experiment
configs, runners, capture files and the command line).
"""

__version__ = "0.1.0"
