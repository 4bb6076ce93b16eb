from . import trap_model, linearization, pseudopotential, integrator, periodic_orbit, floquet
