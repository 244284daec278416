
from fracmerge.main import main

main()
