"""Admittance-controlled manipulator simulation toolkit.

A deterministic simulation of compliant trajectory execution for a 6-DOF
arm: virtual mass-spring-damper admittance on top of an RRT*-planned
Cartesian trajectory, damped-least-squares inverse kinematics, a PID joint
velocity loop, and a planar pose-estimation pipeline that seeds the goal.
"""

__version__ = "0.1.0"
