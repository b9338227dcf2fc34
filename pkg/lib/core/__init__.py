# lib.core package
