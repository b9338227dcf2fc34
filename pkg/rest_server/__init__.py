# rest_server package
