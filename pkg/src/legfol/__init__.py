"""Verification toolkit for coisotropic submanifolds, Legendrian foliations
and germs of contact structures, built on symbolic expression fields with
independent numeric oracles."""

__version__ = "0.1.0"
