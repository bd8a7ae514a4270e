"""Matter-wave emission into sinusoidal optical lattices.

Complex-energy lattice functions from infinite products, single- and
multi-emitter decay, in-gap bound states and matter-wave polaritons.
"""
__version__ = "0.1.0"

from .vacuum import (LatticeParams, VacuumSpectrum, characteristic_energies,  # noqa: E402
                     choose_cutoff, discriminant_ode, product_T, lattice_momentum,
                     density_of_states, fourier_coeffs, mathieu_cs, bloch_wave,
                     band_energy, franck_condon, hill_bands)
from .bath import (EmitterArray, GapProducts, coupling_kappa, rabi_for_kappa,  # noqa: E402
                   a_ho_from_depth, gtilde_tight, gtilde_exact, gtilde_matrix)
from .spectrum import (SheetPole, PhaseMap, physical_poles, phase_maps,  # noqa: E402
                       pole_polynomial_roots, residue_alpha, weak_coupling_estimates)
from .dynamics import (DecayTrace, amplitude_evolution, branch_integral,  # noqa: E402
                       emitted_modes, decay_with_modes, eom_oracle, resolvent_dynamics_N)
from .boundstates import (BoundState, find_bound_states, bs_spatial_profile,  # noqa: E402
                          bs_momentum_distribution, lattice_momentum_integral_check)
from .polaritons import (PolaritonBands, g_eigenvalue, polariton_bands,  # noqa: E402
                         polariton_dynamics, engineered_detuning_bands, hopping_rates)

__all__ = [n for n in dir() if not n.startswith("_")]
