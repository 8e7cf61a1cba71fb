"""Random chemostat with wall growth, competition and bounded OU noise on the dilution rate."""
__version__ = '0.1'
