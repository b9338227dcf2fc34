# lib.rest_server package
