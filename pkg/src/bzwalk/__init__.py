"""Quantum walks of a two-component condensate in the Brillouin zone of a 1-D lattice.

Modules
-------
units        constants, lattice units, parameter containers
band         Bloch bands, Berry-Zak connection, Peierls phases
propagator   split-step Schroedinger / Gross-Pitaevskii evolution
idealwalk    reference walk on n quasimomentum sites, Dirac limit
observables  site distributions, fidelities, Zeeman overlap
protocol     the seven-stage experimental sequence
decoherence  noise spectra, dephasing estimates, Monte Carlo
cli          command-line entry point
"""

__version__ = "0.1.0"
