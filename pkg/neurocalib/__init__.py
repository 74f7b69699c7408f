from .Modules.core import main

def neurocalib():
    main()
