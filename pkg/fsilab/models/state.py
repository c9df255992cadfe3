import numpy as np
from pydantic import BaseModel, ConfigDict


class State(BaseModel):
    """A triple [u, w1, w2] on the grid.
    
    `u` is the full face vector (boundary normal faces included), `w1` and `w2`
    live on the plate DOFs, one per Omega face. Real in the time domain, complex in the
    frequency domain.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)
    
    u: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    
    @property
    def is_complex(self) -> bool:
        return any(np.iscomplexobj(x) for x in (self.u, self.w1, self.w2))
    
    def conj(self) -> "State":
        return State(u=np.conj(self.u), w1=np.conj(self.w1), w2=np.conj(self.w2))
    
    def scaled(self, alpha: complex) -> "State":
        return State(u=alpha * self.u, w1=alpha * self.w1, w2=alpha * self.w2)
    
    def plus(self, other: "State") -> "State":
        return State(u=self.u + other.u, w1=self.w1 + other.w1, w2=self.w2 + other.w2)
    
    def minus(self, other: "State") -> "State":
        return self.plus(other.scaled(-1.0))
    
    @classmethod
    def zeros(cls, n_faces: int, n_plate: int, dtype=float) -> "State":
        return cls(
            u=np.zeros(n_faces, dtype=dtype),
            w1=np.zeros(n_plate, dtype=dtype),
            w2=np.zeros(n_plate, dtype=dtype),
        )
