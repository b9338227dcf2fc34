# lib package
