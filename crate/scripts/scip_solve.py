#!/usr/bin/env python3
"""Solve an LP-format model with SCIP and write a plain solution file.

usage: scip_solve.py MODEL SOLUTION [TIME_LIMIT]
"""
import sys

from pyscipopt import Model

STATUS = {
    "optimal": "optimal",
    "infeasible": "infeasible",
    "timelimit": "feasible",
    "gaplimit": "feasible",
    "unbounded": "unknown",
    "inforunbd": "infeasible",
}


def main():
    model_path, solution_path = sys.argv[1], sys.argv[2]
    m = Model()
    m.hideOutput()
    m.readProblem(model_path)
    if len(sys.argv) > 3:
        m.setParam("limits/time", float(sys.argv[3]))
    m.optimize()
    status = STATUS.get(m.getStatus(), "unknown")
    if status == "feasible" and m.getNSols() == 0:
        status = "unknown"
    with open(solution_path, "w") as out:
        out.write(f"# status {status}\n")
        if status in ("optimal", "feasible"):
            out.write(f"# objective {m.getObjVal()!r}\n")
            sol = m.getBestSol()
            for v in m.getVars():
                value = sol[v]
                if value != 0.0:
                    out.write(f"{v.name} {value!r}\n")


if __name__ == "__main__":
    main()
