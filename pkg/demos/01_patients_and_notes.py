"""
Synthetic patients and the notes written about them
===================================================

Draw covariates, treatments and outcomes, then turn each covariate vector
into a short note. Only some coordinates make it into each note.
"""
import numpy as np

from textcate import DgpParams, SurrogateConfig, generate, render_batch, true_cate

p = DgpParams(n=5, seed=0)
ds = generate(p)
print("covariates\n", np.round(ds.X, 2))
print("treatment", ds.a, "outcome", np.round(ds.y, 3))
print("covariate-level CATE", np.round(true_cate(ds.X, p), 3))

# the same patients under each prompt family, half the coordinates leaked
for family in ("Factual", "Narrative", "SymptomFocused"):
    notes = render_batch(ds.X, SurrogateConfig(family, leak_probability=0.5), seed=0)
    print(f"\n{family}")
    for s in notes[:2]:
        print("  ", s.text)
        print("   leaked", s.leaked_mask)
